/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_inclusionsolve_free: (a: number, b: number) => void;
export const inclusion_solve: (a: number, b: number, c: number) => [number, number, number];
export const inclusionsolve_converged: (a: number) => number;
export const inclusionsolve_effective: (a: number) => [number, number];
export const inclusionsolve_iterations: (a: number) => number;
export const inclusionsolve_size: (a: number) => number;
export const inclusionsolve_strain: (a: number) => [number, number];
export const interpolant_profile: (a: number, b: number, c: number) => [number, number, number, number];
export const pattern_points: (a: number, b: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __wbindgen_start: () => void;
