/**
 * SPA wiring. All model outputs (masks, scores, results) come from the /v1
 * API; this module only routes DOM events to the typed client and renders
 * responses. State lives in the session and the parameter panel.
 */

import { ApiClient, ApiError } from './api';
import type { AlignResponse, JobResult, MaskView } from './api';
import { fileToBase64, pngDataUrl } from './files';
import {
  colorFor,
  decodeMaskPng,
  displayToPixel,
  hitTest,
  paintPreview,
  type DecodedMask,
} from './overlay';
import { DEFAULT_PANEL, toWireParams, validatePanel, type PanelState } from './params';
import { pollJob } from './poll';
import { EditSession } from './session';
import { exportSession } from './exporter';

const api = new ApiClient('');
const session = new EditSession();

interface EntityView {
  view: MaskView;
  decoded: DecodedMask;
  score: number | null;
}

interface UiState {
  entities: EntityView[];
  selected: number; // index into entities, -1 when nothing is selected
  alignStatus: AlignResponse | null;
  lastResult: JobResult | null;
  lastText: string;
  lastPrompt: string | null;
  busy: boolean; // one manipulate job in flight at a time
}

const ui: UiState = {
  entities: [],
  selected: -1,
  alignStatus: null,
  lastResult: null,
  lastText: '',
  lastPrompt: null,
  busy: false,
};

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
}

const banner = el<HTMLDivElement>('banner');
const fileInput = el<HTMLInputElement>('file-input');
const promptInput = el<HTMLInputElement>('prompt-input');
const segmentBtn = el<HTMLButtonElement>('segment-btn');
const alignBtn = el<HTMLButtonElement>('align-btn');
const scoringSelect = el<HTMLSelectElement>('scoring-select');
const modeSelect = el<HTMLSelectElement>('mode-select');
const thetaInput = el<HTMLInputElement>('theta-input');
const entityList = el<HTMLDivElement>('entity-list');
const previewCanvas = el<HTMLCanvasElement>('preview-canvas');
const textInput = el<HTMLInputElement>('text-input');
const maskSourceSelect = el<HTMLSelectElement>('mask-source');
const methodSelect = el<HTMLSelectElement>('method-select');
const seedInput = el<HTMLInputElement>('seed-input');
const stepsInput = el<HTMLInputElement>('steps-input');
const guidanceInput = el<HTMLInputElement>('guidance-input');
const etaInput = el<HTMLInputElement>('eta-input');
const temperatureInput = el<HTMLInputElement>('temperature-input');
const topkInput = el<HTMLInputElement>('topk-input');
const grayInput = el<HTMLInputElement>('gray-input');
const runBtn = el<HTMLButtonElement>('run-btn');
const jobStatus = el<HTMLSpanElement>('job-status');
const resultBlock = el<HTMLDivElement>('result-block');
const resultImg = el<HTMLImageElement>('result-img');
const resultMeta = el<HTMLDivElement>('result-meta');
const acceptBtn = el<HTMLButtonElement>('accept-btn');
const redoBtn = el<HTMLButtonElement>('redo-btn');
const historyList = el<HTMLOListElement>('history-list');
const exportBtn = el<HTMLButtonElement>('export-btn');
const countersSpan = el<HTMLSpanElement>('counters');

function applyPanelDefaults(): void {
  thetaInput.value = String(DEFAULT_PANEL.theta);
  seedInput.value = String(DEFAULT_PANEL.seed);
  stepsInput.value = String(DEFAULT_PANEL.steps);
  guidanceInput.value = String(DEFAULT_PANEL.guidance);
  etaInput.value = String(DEFAULT_PANEL.eta);
  temperatureInput.value = String(DEFAULT_PANEL.temperature);
  topkInput.value = String(DEFAULT_PANEL.topK);
  methodSelect.value = DEFAULT_PANEL.method;
  scoringSelect.value = DEFAULT_PANEL.scoring;
  grayInput.checked = DEFAULT_PANEL.useGray;
}

function readPanel(): PanelState {
  return {
    method: methodSelect.value as PanelState['method'],
    text: textInput.value,
    prompt: promptInput.value,
    scoring: scoringSelect.value as PanelState['scoring'],
    theta: Number(thetaInput.value),
    seed: Number(seedInput.value),
    steps: Number(stepsInput.value),
    guidance: Number(guidanceInput.value),
    eta: Number(etaInput.value),
    temperature: Number(temperatureInput.value),
    topK: Number(topkInput.value),
    useGray: grayInput.checked,
  };
}

function showBanner(message: string): void {
  banner.textContent = message;
  banner.classList.remove('hidden');
}

function clearBanner(): void {
  banner.classList.add('hidden');
  banner.textContent = '';
}

function reportError(error: unknown): void {
  if (error instanceof ApiError) {
    showBanner(`${error.code}: ${error.message}`);
  } else {
    showBanner(error instanceof Error ? error.message : String(error));
  }
}

async function refreshCounters(): Promise<void> {
  try {
    const counters = await api.counters();
    countersSpan.textContent =
      `align ${counters.align_calls} | segment ${counters.segment_calls}` +
      ` | jobs ${counters.manipulate_jobs}`;
  } catch {
    countersSpan.textContent = '';
  }
}

async function setEntities(masks: MaskView[], scores: number[] | null): Promise<void> {
  ui.entities = await Promise.all(
    masks.map(async (view, k) => ({
      view,
      decoded: await decodeMaskPng(view.png),
      score: scores === null ? null : scores[k],
    }))
  );
}

function renderEntityList(): void {
  entityList.replaceChildren();
  ui.entities.forEach((entity, k) => {
    const item = document.createElement('div');
    item.className = k === ui.selected ? 'entity selected' : 'entity';
    const swatch = document.createElement('span');
    swatch.className = 'swatch';
    const color = colorFor(k);
    swatch.style.background = `rgb(${color.r}, ${color.g}, ${color.b})`;
    item.appendChild(swatch);
    const label = document.createElement('span');
    label.textContent = `entity ${entity.view.id}`;
    item.appendChild(label);
    if (entity.score !== null) {
      // scores render verbatim from the server response
      const score = document.createElement('span');
      score.className = 'score';
      score.textContent = String(entity.score);
      item.appendChild(score);
    }
    item.addEventListener('click', () => void selectEntity(k));
    entityList.appendChild(item);
  });
}

async function repaintPreview(): Promise<void> {
  const base = session.baseImage;
  if (base === null) {
    return;
  }
  await paintPreview(
    previewCanvas,
    base,
    ui.entities.map((entity) => entity.decoded),
    { highlighted: ui.selected }
  );
}

async function selectEntity(k: number): Promise<void> {
  ui.selected = k;
  renderEntityList();
  await repaintPreview();
  updateButtons();
}

function updateButtons(): void {
  const loaded = session.baseImage !== null;
  segmentBtn.disabled = !loaded || ui.busy;
  alignBtn.disabled = !loaded || ui.busy;
  runBtn.disabled = !loaded || ui.busy;
  exportBtn.disabled = session.length === 0;
}

async function handleUpload(): Promise<void> {
  const file = fileInput.files?.[0];
  if (file === undefined) {
    return;
  }
  clearBanner();
  const image = await fileToBase64(file);
  try {
    // segment before replacing anything: a rejected upload leaves the
    // current session untouched
    const response = await api.segment({ image });
    session.load(image);
    ui.alignStatus = null;
    ui.lastResult = null;
    resultBlock.classList.add('hidden');
    historyList.replaceChildren();
    await setEntities(response.masks, null);
    ui.selected = -1;
    renderEntityList();
    await repaintPreview();
  } catch (error) {
    reportError(error);
  } finally {
    updateButtons();
    void refreshCounters();
  }
}

async function handleSegment(): Promise<void> {
  const base = session.baseImage;
  if (base === null) {
    return;
  }
  clearBanner();
  try {
    const response = await api.segment({ image: base });
    ui.alignStatus = null;
    await setEntities(response.masks, null);
    ui.selected = -1;
    renderEntityList();
    await repaintPreview();
  } catch (error) {
    reportError(error);
  } finally {
    updateButtons();
    void refreshCounters();
  }
}

async function handleAlign(): Promise<void> {
  const base = session.baseImage;
  const prompt = promptInput.value.trim();
  if (base === null || prompt.length === 0) {
    showBanner('enter an entity prompt to align');
    return;
  }
  clearBanner();
  const mode = modeSelect.value as 'argmax' | 'threshold';
  try {
    const response = await api.align({
      image: base,
      prompt,
      mode,
      scoring: scoringSelect.value as 'global' | 'tokenwise',
      theta: mode === 'threshold' ? Number(thetaInput.value) : null,
    });
    ui.alignStatus = response;
    await setEntities(response.masks, response.scores);
    // argmax returns exactly one selected entity; honor it until the user
    // clicks another one
    ui.selected = response.selected.length > 0 ? response.selected[0] : -1;
    renderEntityList();
    await repaintPreview();
  } catch (error) {
    reportError(error);
  } finally {
    updateButtons();
    void refreshCounters();
  }
}

function handleCanvasClick(event: MouseEvent): void {
  if (ui.entities.length === 0) {
    return;
  }
  const { x, y } = displayToPixel(previewCanvas, event.clientX, event.clientY);
  const hit = hitTest(
    ui.entities.map((entity) => entity.decoded),
    x,
    y
  );
  if (hit >= 0) {
    void selectEntity(hit);
  }
}

async function submitEdit(panel: PanelState): Promise<void> {
  const base = session.baseImage;
  if (base === null || ui.busy) {
    return;
  }
  const problems = validatePanel(panel);
  if (problems.length > 0) {
    showBanner(problems.join('; '));
    return;
  }
  const useMaskRef = maskSourceSelect.value === 'selected';
  let prompt: string | undefined;
  let maskRef: string | undefined;
  if (useMaskRef) {
    if (ui.selected < 0) {
      showBanner('select an entity to use as the mask');
      return;
    }
    maskRef = ui.entities[ui.selected].view.mask_ref;
  } else {
    if (panel.prompt.trim().length === 0) {
      showBanner('enter an entity prompt, or switch the mask source');
      return;
    }
    prompt = panel.prompt.trim();
  }
  clearBanner();
  ui.busy = true;
  updateButtons();
  jobStatus.textContent = 'submitting';
  try {
    const accepted = await api.manipulate({
      image: base,
      text: panel.text,
      method: panel.method,
      ...(prompt !== undefined ? { prompt } : {}),
      ...(maskRef !== undefined ? { mask_ref: maskRef } : {}),
      scoring: panel.scoring,
      params: toWireParams(panel),
    });
    const view = await pollJob(() => api.job(accepted.job_id), accepted.job_id, {
      onTick: (tick, elapsedMs) => {
        jobStatus.textContent = `${tick.state} (${(elapsedMs / 1000).toFixed(1)}s)`;
      },
    });
    if (view.state === 'failed' || view.result === null) {
      showBanner(view.error ?? 'edit failed');
      jobStatus.textContent = 'failed';
      return;
    }
    ui.lastResult = view.result;
    ui.lastText = panel.text;
    ui.lastPrompt = prompt ?? null;
    resultImg.src = pngDataUrl(view.result.image);
    const hashes = Object.entries(view.result.model_hashes)
      .map(([name, digest]) => `${name}=${digest.slice(0, 12)}`)
      .join(' ');
    resultMeta.textContent =
      `method=${view.result.method} seed=${view.result.seed}` +
      ` steps=${view.result.params.steps} guidance=${view.result.params.guidance}` +
      ` mask=${view.result.mask_ref} ${hashes}`;
    resultBlock.classList.remove('hidden');
    jobStatus.textContent = 'done';
  } catch (error) {
    reportError(error);
    jobStatus.textContent = 'error';
  } finally {
    ui.busy = false;
    updateButtons();
    void refreshCounters();
  }
}

function renderHistory(): void {
  historyList.replaceChildren();
  for (const step of session.history) {
    const item = document.createElement('li');
    const thumb = document.createElement('img');
    thumb.src = pngDataUrl(step.resultImage);
    item.appendChild(thumb);
    const label = document.createElement('span');
    label.textContent = `"${step.text}" (${step.method}, seed ${step.seed})`;
    item.appendChild(label);
    historyList.appendChild(item);
  }
}

async function handleAccept(): Promise<void> {
  if (ui.lastResult === null) {
    return;
  }
  session.accept(ui.lastResult, ui.lastText, ui.lastPrompt);
  ui.lastResult = null;
  resultBlock.classList.add('hidden');
  jobStatus.textContent = '';
  // the accepted result is the new base; stale masks no longer apply to it
  ui.entities = [];
  ui.selected = -1;
  ui.alignStatus = null;
  renderEntityList();
  renderHistory();
  await repaintPreview();
  updateButtons();
}

async function handleRedo(): Promise<void> {
  if (ui.lastResult === null || ui.busy) {
    return;
  }
  // a redo re-runs with a fresh seed; the session stays untouched until accept
  const panel = readPanel();
  panel.seed = panel.seed + 1;
  seedInput.value = String(panel.seed);
  await submitEdit(panel);
}

async function handleExport(): Promise<void> {
  const bytes = await exportSession(session.snapshot());
  const blob = new Blob([bytes as Uint8Array<ArrayBuffer>], { type: 'application/zip' });
  const url = URL.createObjectURL(blob);
  const anchor = document.createElement('a');
  anchor.href = url;
  anchor.download = 'semani-session.zip';
  anchor.click();
  URL.revokeObjectURL(url);
}

applyPanelDefaults();
updateButtons();
void refreshCounters();

fileInput.addEventListener('change', () => void handleUpload());
segmentBtn.addEventListener('click', () => void handleSegment());
alignBtn.addEventListener('click', () => void handleAlign());
previewCanvas.addEventListener('click', handleCanvasClick);
runBtn.addEventListener('click', () => void submitEdit(readPanel()));
acceptBtn.addEventListener('click', () => void handleAccept());
redoBtn.addEventListener('click', () => void handleRedo());
exportBtn.addEventListener('click', () => void handleExport());
