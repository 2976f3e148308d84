/* tslint:disable */
/* eslint-disable */

export class Demo {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * [x_min, y_min, x_max, y_max] of the conveyor.
     */
    bounds(): Float64Array;
    controlPick(): string;
    evaluatePick(x: number, y: number, r: number): string;
    /**
     * Row-major surface heights.
     */
    heights(): Float64Array;
    loadScene(index: number): void;
    constructor(seed: number);
    optimize(x: number, y: number, r: number): string;
    /**
     * Row-major package ids, −1 for bare conveyor.
     */
    segments(): Int32Array;
    trainQuick(n_picks: number): string;
    readonly nx: number;
    readonly ny: number;
    /**
     * Meters per grid cell.
     */
    readonly resolution: number;
    readonly trained: boolean;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demo_free: (a: number, b: number) => void;
    readonly demo_bounds: (a: number) => [number, number];
    readonly demo_controlPick: (a: number) => [number, number, number, number];
    readonly demo_evaluatePick: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly demo_heights: (a: number) => [number, number];
    readonly demo_loadScene: (a: number, b: number) => [number, number];
    readonly demo_new: (a: number) => [number, number, number];
    readonly demo_nx: (a: number) => number;
    readonly demo_ny: (a: number) => number;
    readonly demo_optimize: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly demo_resolution: (a: number) => number;
    readonly demo_segments: (a: number) => [number, number];
    readonly demo_trainQuick: (a: number, b: number) => [number, number, number, number];
    readonly demo_trained: (a: number) => number;
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
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
