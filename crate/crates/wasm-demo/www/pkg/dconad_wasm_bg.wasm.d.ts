/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_preview_free: (a: number, b: number) => void;
export const evaluate_top: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
export const preview_dims: (a: number) => number;
export const preview_is_empty: (a: number) => number;
export const preview_labels: (a: number) => [number, number];
export const preview_len: (a: number) => number;
export const preview_variable: (a: number, b: number) => [number, number];
export const synth_preview: (a: bigint) => [number, number, number];
export const train_and_score: (a: bigint, b: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
