/* tslint:disable */
/* eslint-disable */

/**
 * Elliptic inclusion in a unit matrix on `diag(n, n)` under uniaxial
 * loading. Holds the total strain `ε₁₁` on an `n × n` raster.
 */
export class InclusionSolve {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    converged(): boolean;
    /**
     * `C^eff : ε⁰` in Mandel components.
     */
    effective(): Float64Array;
    iterations(): number;
    size(): number;
    /**
     * Row-major, row 0 at the bottom of the cell.
     */
    strain(): Float64Array;
}

export function inclusion_solve(n: number, contrast: number, alpha: number): InclusionSolve;

export function interpolant_profile(n: number, alpha: number, samples: number): Float64Array;

export function pattern_points(matrix: string): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_inclusionsolve_free: (a: number, b: number) => void;
    readonly inclusion_solve: (a: number, b: number, c: number) => [number, number, number];
    readonly inclusionsolve_converged: (a: number) => number;
    readonly inclusionsolve_effective: (a: number) => [number, number];
    readonly inclusionsolve_iterations: (a: number) => number;
    readonly inclusionsolve_size: (a: number) => number;
    readonly inclusionsolve_strain: (a: number) => [number, number];
    readonly interpolant_profile: (a: number, b: number, c: number) => [number, number, number, number];
    readonly pattern_points: (a: number, b: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
