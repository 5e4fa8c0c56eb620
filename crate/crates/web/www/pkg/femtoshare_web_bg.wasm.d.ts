/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_trajectory_free: (a: number, b: number) => void;
export const ocf_vs_cf: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const price_trajectory: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
export const trajectory_active_uus: (a: number) => number;
export const trajectory_converged: (a: number) => number;
export const trajectory_iterations: (a: number) => number;
export const trajectory_mco_payoff: (a: number) => number;
export const trajectory_num_coalitions: (a: number) => number;
export const trajectory_prices: (a: number) => [number, number];
export const trajectory_subbands: (a: number) => number;
export const trajectory_uu_payoff_sum: (a: number) => number;
export const waterfill_curve: (a: number, b: number, c: number, d: number, e: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
