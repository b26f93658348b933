/**
 * Edit session: a base image plus an append-only history of accepted edits.
 *
 * Each accepted result becomes the base for the next edit. Re-running with a
 * new seed never touches the session; only an explicit accept appends. Loading
 * a new image clears everything.
 */

import type { JobResult, ManipulateParams } from './api';

export interface EditStep {
  index: number;
  inputImage: string; // base64 PNG the edit was applied to
  text: string;
  method: string;
  prompt: string | null;
  maskRef: string;
  maskPng: string; // base64 PNG, the mask the server applied
  resultImage: string; // base64 PNG
  seed: number;
  params: ManipulateParams;
  modelHashes: Record<string, string>;
}

export interface SessionSnapshot {
  originalImage: string | null;
  baseImage: string | null;
  steps: EditStep[];
}

export class EditSession {
  private original: string | null = null;
  private base: string | null = null;
  private steps: EditStep[] = [];

  /** Start over with a new input image; history is discarded. */
  load(image: string): void {
    this.original = image;
    this.base = image;
    this.steps = [];
  }

  get originalImage(): string | null {
    return this.original;
  }

  /** Image the next edit applies to: the last accepted result, else the upload. */
  get baseImage(): string | null {
    return this.base;
  }

  get history(): readonly EditStep[] {
    return this.steps;
  }

  get length(): number {
    return this.steps.length;
  }

  /**
   * Accept a finished edit: append it to the history and make its result the
   * new base. Steps are never mutated or removed afterwards.
   */
  accept(result: JobResult, text: string, prompt: string | null): EditStep {
    if (this.base === null) {
      throw new Error('no image loaded');
    }
    const step: EditStep = Object.freeze({
      index: this.steps.length,
      inputImage: this.base,
      text,
      method: result.method,
      prompt,
      maskRef: result.mask_ref,
      maskPng: result.mask,
      resultImage: result.image,
      seed: result.seed,
      params: result.params,
      modelHashes: result.model_hashes,
    });
    this.steps.push(step);
    this.base = step.resultImage;
    return step;
  }

  snapshot(): SessionSnapshot {
    return {
      originalImage: this.original,
      baseImage: this.base,
      steps: [...this.steps],
    };
  }
}
