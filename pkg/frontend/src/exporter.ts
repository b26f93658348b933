/**
 * Session export: a zip holding every input, mask, parameter set, seed and
 * result image, plus a session.json whose per-step `replay` command
 * reproduces the accepted result exactly through the CLI.
 */

import JSZip from 'jszip';

import type { EditStep, SessionSnapshot } from './session';
import { base64ToBytes } from './files';

export interface StepRecord {
  index: number;
  text: string;
  method: string;
  prompt: string | null;
  mask_ref: string;
  seed: number;
  params: Record<string, unknown>;
  model_hashes: Record<string, string>;
  files: { input: string; mask: string; result: string };
  replay: string;
}

export interface SessionRecord {
  created: string;
  original_image: string | null;
  steps: StepRecord[];
}

const stepDir = (index: number): string => `step_${String(index).padStart(3, '0')}`;

function quoteArg(value: string): string {
  return `'${value.replace(/'/g, `'"'"'`)}'`;
}

/** CLI invocation that regenerates this step's result byte for byte. */
export function replayCommand(step: EditStep): string {
  const dir = stepDir(step.index);
  const p = step.params;
  const parts = [
    'semani manipulate',
    `--image ${dir}/input.png`,
    `--mask ${dir}/mask.png`,
    `--text ${quoteArg(step.text)}`,
    `--method ${step.method}`,
    `--seed ${p.seed}`,
    `--steps ${p.steps}`,
    `--guidance ${p.guidance}`,
    `--eta ${p.eta}`,
    `--temperature ${p.temperature}`,
    `--top-k ${p.top_k}`,
  ];
  if (p.use_gray) {
    parts.push('--use-gray');
  }
  parts.push(`--out ${dir}/result.png`);
  return parts.join(' ');
}

export function toStepRecord(step: EditStep): StepRecord {
  const dir = stepDir(step.index);
  return {
    index: step.index,
    text: step.text,
    method: step.method,
    prompt: step.prompt,
    mask_ref: step.maskRef,
    seed: step.seed,
    params: { ...step.params },
    model_hashes: { ...step.modelHashes },
    files: {
      input: `${dir}/input.png`,
      mask: `${dir}/mask.png`,
      result: `${dir}/result.png`,
    },
    replay: replayCommand(step),
  };
}

export function toSessionRecord(snapshot: SessionSnapshot, created: Date): SessionRecord {
  return {
    created: created.toISOString(),
    original_image: snapshot.originalImage === null ? null : 'original.png',
    steps: snapshot.steps.map(toStepRecord),
  };
}

/** Build the export archive bytes; `created` is injectable for reproducible tests. */
export async function exportSession(
  snapshot: SessionSnapshot,
  created: Date = new Date()
): Promise<Uint8Array> {
  const zip = new JSZip();
  const record = toSessionRecord(snapshot, created);
  zip.file('session.json', JSON.stringify(record, null, 2));
  if (snapshot.originalImage !== null) {
    zip.file('original.png', base64ToBytes(snapshot.originalImage));
  }
  for (const step of snapshot.steps) {
    const dir = stepDir(step.index);
    zip.file(`${dir}/input.png`, base64ToBytes(step.inputImage));
    zip.file(`${dir}/mask.png`, base64ToBytes(step.maskPng));
    zip.file(`${dir}/result.png`, base64ToBytes(step.resultImage));
  }
  return zip.generateAsync({ type: 'uint8array' });
}
