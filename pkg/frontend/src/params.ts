/**
 * Parameter panel state: defaults and client-side bounds.
 *
 * Bounds mirror the server-side request validation exactly so the panel can
 * reject bad values before submission; the server remains the authority.
 */

import type { ManipulateParams, Method, Scoring } from './api';

export interface PanelState {
  method: Method;
  text: string;
  prompt: string;
  scoring: Scoring;
  theta: number;
  seed: number;
  steps: number;
  guidance: number;
  eta: number;
  temperature: number;
  topK: number;
  useGray: boolean;
}

export const DEFAULT_PANEL: Readonly<PanelState> = Object.freeze({
  method: 'diff',
  text: '',
  prompt: '',
  scoring: 'global',
  theta: 0.163,
  seed: 0,
  steps: 50,
  guidance: 9.0,
  eta: 0.0,
  temperature: 1.0,
  topK: 32,
  useGray: false,
});

export interface Bounds {
  min?: number;
  max?: number;
  exclusiveMin?: number;
  integer?: boolean;
}

export const PARAM_BOUNDS: Readonly<Record<string, Bounds>> = Object.freeze({
  seed: { integer: true },
  steps: { min: 1, max: 1000, integer: true },
  guidance: { min: 0 },
  eta: { min: 0, max: 1 },
  temperature: { exclusiveMin: 0 },
  topK: { min: 1, integer: true },
});

function checkBounds(name: string, value: number, bounds: Bounds): string | null {
  if (!Number.isFinite(value)) {
    return `${name} must be a number`;
  }
  if (bounds.integer && !Number.isInteger(value)) {
    return `${name} must be an integer`;
  }
  if (bounds.min !== undefined && value < bounds.min) {
    return `${name} must be >= ${bounds.min}`;
  }
  if (bounds.exclusiveMin !== undefined && value <= bounds.exclusiveMin) {
    return `${name} must be > ${bounds.exclusiveMin}`;
  }
  if (bounds.max !== undefined && value > bounds.max) {
    return `${name} must be <= ${bounds.max}`;
  }
  return null;
}

/** All violations, empty when the panel is submittable. */
export function validatePanel(state: PanelState): string[] {
  const problems: string[] = [];
  const numeric: Array<[string, number]> = [
    ['seed', state.seed],
    ['steps', state.steps],
    ['guidance', state.guidance],
    ['eta', state.eta],
    ['temperature', state.temperature],
    ['topK', state.topK],
  ];
  for (const [name, value] of numeric) {
    const problem = checkBounds(name, value, PARAM_BOUNDS[name]);
    if (problem !== null) {
      problems.push(problem);
    }
  }
  if (state.text.trim().length === 0) {
    problems.push('text must be non-empty');
  }
  return problems;
}

export function toWireParams(state: PanelState): ManipulateParams {
  return {
    seed: state.seed,
    steps: state.steps,
    guidance: state.guidance,
    eta: state.eta,
    temperature: state.temperature,
    top_k: state.topK,
    use_gray: state.useGray,
  };
}
