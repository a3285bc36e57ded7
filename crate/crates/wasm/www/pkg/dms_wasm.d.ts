/* tslint:disable */
/* eslint-disable */

/**
 * Outcome of the last solve, read field by field from JS.
 */
export class Report {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    beta: number;
    iterations: number;
    lambda: number;
    psnr: number;
    /**
     * Noise level used by the tuner, `NaN` after a plain solve.
     */
    sigma: number;
    /**
     * Descent iterations, 0 after a plain solve.
     */
    tuning_steps: number;
}

export class Session {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Averaged SUGAR descent with `replicates` probes and at most `steps`
     * iterations; `sigma <= 0` means estimate it by MAD. With `scan` the
     * start is the best node of a 5x5 SURE grid, otherwise the closed-form
     * initialization.
     */
    auto_tune(sigma: number, replicates: number, steps: number, scan: boolean): Report;
    clean_rgba(): Uint8Array;
    denoise(beta: number, lambda: number): Report;
    mad_sigma(): number;
    /**
     * `geometry` is `"diamond"` or `"ellipse"`.
     */
    constructor(geometry: string, size: number, sigma: number, seed: bigint);
    /**
     * PSNR of the noisy observation against the clean phantom.
     */
    noisy_psnr(): number;
    noisy_rgba(): Uint8Array;
    /**
     * Last estimate with edges `|e| > threshold` painted red; empty before any solve.
     */
    result_rgba(threshold: number): Uint8Array;
    size(): number;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_get_report_beta: (a: number) => number;
    readonly __wbg_get_report_iterations: (a: number) => number;
    readonly __wbg_get_report_lambda: (a: number) => number;
    readonly __wbg_get_report_psnr: (a: number) => number;
    readonly __wbg_get_report_sigma: (a: number) => number;
    readonly __wbg_get_report_tuning_steps: (a: number) => number;
    readonly __wbg_report_free: (a: number, b: number) => void;
    readonly __wbg_session_free: (a: number, b: number) => void;
    readonly __wbg_set_report_beta: (a: number, b: number) => void;
    readonly __wbg_set_report_iterations: (a: number, b: number) => void;
    readonly __wbg_set_report_lambda: (a: number, b: number) => void;
    readonly __wbg_set_report_psnr: (a: number, b: number) => void;
    readonly __wbg_set_report_sigma: (a: number, b: number) => void;
    readonly __wbg_set_report_tuning_steps: (a: number, b: number) => void;
    readonly session_auto_tune: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
    readonly session_clean_rgba: (a: number) => [number, number];
    readonly session_denoise: (a: number, b: number, c: number) => [number, number, number];
    readonly session_mad_sigma: (a: number) => number;
    readonly session_new: (a: number, b: number, c: number, d: number, e: bigint) => [number, number, number];
    readonly session_noisy_psnr: (a: number) => number;
    readonly session_noisy_rgba: (a: number) => [number, number];
    readonly session_result_rgba: (a: number, b: number) => [number, number];
    readonly session_size: (a: number) => number;
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
