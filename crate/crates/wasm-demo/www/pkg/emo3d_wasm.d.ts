/* tslint:disable */
/* eslint-disable */

export function channelNames(): string[];

export function emotionNames(): string[];

export function lexiconWords(): string[];

/**
 * JSON list of `{word, similarity, dominant}`.
 */
export function nearestWords(word: string, k: number): string;

export function renderFace(weights: Float64Array, size: number): Uint8Array;

/**
 * JSON `{prompt, retrieved_mean, kl, score}`.
 */
export function scoreExplorer(prompt: Float64Array, retrieved: Float64Array, eps: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly channelNames: () => [number, number];
    readonly emotionNames: () => [number, number];
    readonly lexiconWords: () => [number, number];
    readonly nearestWords: (a: number, b: number, c: number) => [number, number, number, number];
    readonly renderFace: (a: number, b: number, c: number) => [number, number, number, number];
    readonly scoreExplorer: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_drop_slice: (a: number, b: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
