/* tslint:disable */
/* eslint-disable */

export class Heatmap {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    readonly side: number;
    readonly tau: number;
    /**
     * 1 where the site is a-thick.
     */
    readonly thick: Uint8Array;
    readonly threshold: number;
    /**
     * Local times, row-major.
     */
    readonly values: Float64Array;
}

export class LimitCurves {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    readonly cdf: Float64Array;
    readonly g: number;
    readonly mean_tau: number;
    /**
     * P(count = k) for k = 0..=kmax.
     */
    readonly pmf: Float64Array;
    readonly t: Float64Array;
}

/**
 * One Dirichlet free field sample on the planar box of radius `n`, row-major.
 */
export function gff_sample(n: number, seed: bigint): Float64Array;

/**
 * Gumbel-mixture CDF on `points` values of t in [t_min, t_max] and the
 * critical-count pmf, both from a bank of `bank` Brownian exit times of
 * the cube [−1, 1]^dim.
 */
export function limit_curves(dim: number, bank: bigint, dt: number, seed: bigint, t_min: number, t_max: number, points: number, kmax: number): LimitCurves;

/**
 * One unit-rate walk from the origin of the planar box of radius `n`,
 * with its a-thick points.
 */
export function walk_heatmap(n: number, a: number, seed: bigint): Heatmap;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_heatmap_free: (a: number, b: number) => void;
    readonly __wbg_limitcurves_free: (a: number, b: number) => void;
    readonly gff_sample: (a: number, b: bigint) => [number, number, number, number];
    readonly heatmap_side: (a: number) => number;
    readonly heatmap_tau: (a: number) => number;
    readonly heatmap_thick: (a: number) => [number, number];
    readonly heatmap_threshold: (a: number) => number;
    readonly heatmap_values: (a: number) => [number, number];
    readonly limit_curves: (a: number, b: bigint, c: number, d: bigint, e: number, f: number, g: number, h: number) => [number, number, number];
    readonly limitcurves_cdf: (a: number) => [number, number];
    readonly limitcurves_g: (a: number) => number;
    readonly limitcurves_mean_tau: (a: number) => number;
    readonly limitcurves_pmf: (a: number) => [number, number];
    readonly limitcurves_t: (a: number) => [number, number];
    readonly walk_heatmap: (a: number, b: number, c: bigint) => [number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
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
