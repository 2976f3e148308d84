/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_demo_free: (a: number, b: number) => void;
export const demo_bounds: (a: number) => [number, number];
export const demo_controlPick: (a: number) => [number, number, number, number];
export const demo_evaluatePick: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const demo_heights: (a: number) => [number, number];
export const demo_loadScene: (a: number, b: number) => [number, number];
export const demo_new: (a: number) => [number, number, number];
export const demo_nx: (a: number) => number;
export const demo_ny: (a: number) => number;
export const demo_optimize: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const demo_resolution: (a: number) => number;
export const demo_segments: (a: number) => [number, number];
export const demo_trainQuick: (a: number, b: number) => [number, number, number, number];
export const demo_trained: (a: number) => number;
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_start: () => void;
