/* tslint:disable */
/* eslint-disable */

/**
 * Generated views next to the ground truth, with their scores.
 */
export class Comparison {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Generated RGB | generated depth | true RGB | true depth.
     */
    strip(): Image;
    readonly accuracy_depth: number;
    readonly accuracy_rgb: number;
    readonly error_depth: number;
    readonly error_rgb: number;
}

/**
 * Holds the generator used by [`Generator::generate`].
 */
export class Generator {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Generates the view `delta_yaw`/`delta_pitch` away from the input pose
     * and scores it against the true render of that pose.
     */
    generate(_class: string, seed: number, pitch: number, yaw: number, delta_yaw: number, delta_pitch: number): Comparison;
    /**
     * Replaces the network with a checkpoint produced by `viewsynth train`.
     */
    load(bytes: Uint8Array): string;
    /**
     * Starts with a randomly initialized 64 px network.
     */
    constructor();
    readonly input_size: number;
    readonly trained: boolean;
}

/**
 * An RGBA image ready for `ImageData`.
 */
export class Image {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    rgba(): Uint8Array;
    readonly height: number;
    readonly width: number;
}

/**
 * Accuracy in percent for a mean absolute error on the 0-255 scale.
 */
export function accuracy(error: number): number;

/**
 * Renders `class` instance `seed` from the given pose: RGB on the left,
 * depth (near = bright) on the right.
 */
export function render(_class: string, seed: number, pitch: number, yaw: number, size: number): Image;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_comparison_free: (a: number, b: number) => void;
    readonly __wbg_generator_free: (a: number, b: number) => void;
    readonly __wbg_image_free: (a: number, b: number) => void;
    readonly accuracy: (a: number) => [number, number, number];
    readonly comparison_accuracy_depth: (a: number) => number;
    readonly comparison_accuracy_rgb: (a: number) => number;
    readonly comparison_error_depth: (a: number) => number;
    readonly comparison_error_rgb: (a: number) => number;
    readonly comparison_strip: (a: number) => number;
    readonly generator_generate: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number) => [number, number, number];
    readonly generator_input_size: (a: number) => number;
    readonly generator_load: (a: number, b: number, c: number) => [number, number, number, number];
    readonly generator_new: () => [number, number, number];
    readonly generator_trained: (a: number) => number;
    readonly image_height: (a: number) => number;
    readonly image_rgba: (a: number) => [number, number];
    readonly image_width: (a: number) => number;
    readonly render: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
