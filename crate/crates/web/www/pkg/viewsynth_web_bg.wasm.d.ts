/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_comparison_free: (a: number, b: number) => void;
export const __wbg_generator_free: (a: number, b: number) => void;
export const __wbg_image_free: (a: number, b: number) => void;
export const accuracy: (a: number) => [number, number, number];
export const comparison_accuracy_depth: (a: number) => number;
export const comparison_accuracy_rgb: (a: number) => number;
export const comparison_error_depth: (a: number) => number;
export const comparison_error_rgb: (a: number) => number;
export const comparison_strip: (a: number) => number;
export const generator_generate: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number) => [number, number, number];
export const generator_input_size: (a: number) => number;
export const generator_load: (a: number, b: number, c: number) => [number, number, number, number];
export const generator_new: () => [number, number, number];
export const generator_trained: (a: number) => number;
export const image_height: (a: number) => number;
export const image_rgba: (a: number) => [number, number];
export const image_width: (a: number) => number;
export const render: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
