/* tslint:disable */
/* eslint-disable */

/**
 * Test split of the demo benchmark.
 */
export class Preview {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    dims(): number;
    is_empty(): boolean;
    labels(): Uint8Array;
    len(): number;
    /**
     * Values of one variable over time.
     */
    variable(v: number): Float64Array;
}

/**
 * `[precision, recall, f1, threshold]` after flagging the top `ratio` of scores.
 */
export function evaluate_top(scores: Float64Array, labels: Uint8Array, ratio: number, adjust: boolean): Float64Array;

export function synth_preview(seed: bigint): Preview;

/**
 * Trains on the demo benchmark and returns one score per test timestamp.
 */
export function train_and_score(seed: bigint, epochs: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_preview_free: (a: number, b: number) => void;
    readonly evaluate_top: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly preview_dims: (a: number) => number;
    readonly preview_is_empty: (a: number) => number;
    readonly preview_labels: (a: number) => [number, number];
    readonly preview_len: (a: number) => number;
    readonly preview_variable: (a: number, b: number) => [number, number];
    readonly synth_preview: (a: bigint) => [number, number, number];
    readonly train_and_score: (a: bigint, b: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
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
