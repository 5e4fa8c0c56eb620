/* tslint:disable */
/* eslint-disable */

/**
 * Price history and final figures of one hierarchical game run.
 */
export class Trajectory {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    active_uus(): number;
    converged(): boolean;
    iterations(): number;
    mco_payoff(): number;
    num_coalitions(): number;
    /**
     * Iteration-major: entry `t * subbands + m`.
     */
    prices(): Float64Array;
    subbands(): number;
    uu_payoff_sum(): number;
}

export function ocf_vs_cf(num_uus: number, num_subbands: number, interference_cap: number, seeds: number): Float64Array;

export function price_trajectory(num_uus: number, num_subbands: number, power_cap: number, interference_cap: number, seed: number): Trajectory;

/**
 * Flattened `[mu, power, payoff]` triples for `points` prices spread
 * evenly over `(0, mu_max]`.
 */
export function waterfill_curve(lambda: number, h: number, power_cap: number, mu_max: number, points: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_trajectory_free: (a: number, b: number) => void;
    readonly ocf_vs_cf: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly price_trajectory: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
    readonly trajectory_active_uus: (a: number) => number;
    readonly trajectory_converged: (a: number) => number;
    readonly trajectory_iterations: (a: number) => number;
    readonly trajectory_mco_payoff: (a: number) => number;
    readonly trajectory_num_coalitions: (a: number) => number;
    readonly trajectory_prices: (a: number) => [number, number];
    readonly trajectory_subbands: (a: number) => number;
    readonly trajectory_uu_payoff_sum: (a: number) => number;
    readonly waterfill_curve: (a: number, b: number, c: number, d: number, e: number) => [number, number];
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
