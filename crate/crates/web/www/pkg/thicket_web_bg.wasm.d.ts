/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_heatmap_free: (a: number, b: number) => void;
export const __wbg_limitcurves_free: (a: number, b: number) => void;
export const gff_sample: (a: number, b: bigint) => [number, number, number, number];
export const heatmap_side: (a: number) => number;
export const heatmap_tau: (a: number) => number;
export const heatmap_thick: (a: number) => [number, number];
export const heatmap_threshold: (a: number) => number;
export const heatmap_values: (a: number) => [number, number];
export const limit_curves: (a: number, b: bigint, c: number, d: bigint, e: number, f: number, g: number, h: number) => [number, number, number];
export const limitcurves_cdf: (a: number) => [number, number];
export const limitcurves_g: (a: number) => number;
export const limitcurves_mean_tau: (a: number) => number;
export const limitcurves_pmf: (a: number) => [number, number];
export const limitcurves_t: (a: number) => [number, number];
export const walk_heatmap: (a: number, b: number, c: bigint) => [number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
