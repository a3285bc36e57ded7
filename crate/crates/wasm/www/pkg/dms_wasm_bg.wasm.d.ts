/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_get_report_beta: (a: number) => number;
export const __wbg_get_report_iterations: (a: number) => number;
export const __wbg_get_report_lambda: (a: number) => number;
export const __wbg_get_report_psnr: (a: number) => number;
export const __wbg_get_report_sigma: (a: number) => number;
export const __wbg_get_report_tuning_steps: (a: number) => number;
export const __wbg_report_free: (a: number, b: number) => void;
export const __wbg_session_free: (a: number, b: number) => void;
export const __wbg_set_report_beta: (a: number, b: number) => void;
export const __wbg_set_report_iterations: (a: number, b: number) => void;
export const __wbg_set_report_lambda: (a: number, b: number) => void;
export const __wbg_set_report_psnr: (a: number, b: number) => void;
export const __wbg_set_report_sigma: (a: number, b: number) => void;
export const __wbg_set_report_tuning_steps: (a: number, b: number) => void;
export const session_auto_tune: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
export const session_clean_rgba: (a: number) => [number, number];
export const session_denoise: (a: number, b: number, c: number) => [number, number, number];
export const session_mad_sigma: (a: number) => number;
export const session_new: (a: number, b: number, c: number, d: number, e: bigint) => [number, number, number];
export const session_noisy_psnr: (a: number) => number;
export const session_noisy_rgba: (a: number) => [number, number];
export const session_result_rgba: (a: number, b: number) => [number, number];
export const session_size: (a: number) => number;
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __wbindgen_start: () => void;
