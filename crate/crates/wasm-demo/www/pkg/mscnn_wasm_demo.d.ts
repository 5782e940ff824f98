/* tslint:disable */
/* eslint-disable */

/**
 * Original and degraded versions of a synthetic test image.
 */
export class ProxyView {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    readonly degraded: Uint8Array;
    /**
     * Grey levels, row-major.
     */
    readonly original: Uint8Array;
    readonly psnr: number;
    readonly ssim: number;
}

export function bd_from_csv(anchor: string, test: string): Float64Array;

/**
 * Degrades synthetic image `seed` (`size`×`size`) with the block-DCT codec
 * proxy at `qp`.
 */
export function codec_proxy_view(seed: number, size: number, qp: number): ProxyView;

/**
 * Absolute difference, amplified ×4, for showing where the proxy errs.
 */
export function error_map(a: Uint8Array, b: Uint8Array): Uint8Array;

export function fuse_constant(f_cur: number, f_ref: number, gate_logit: number, multiplicative: boolean): Float64Array;

/**
 * RGBA bytes for drawing a grey plane into a canvas.
 */
export function grey_to_rgba(grey: Uint8Array): Uint8Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_proxyview_free: (a: number, b: number) => void;
    readonly bd_from_csv: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly codec_proxy_view: (a: number, b: number, c: number) => [number, number, number];
    readonly error_map: (a: number, b: number, c: number, d: number) => [number, number];
    readonly fuse_constant: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly grey_to_rgba: (a: number, b: number) => [number, number];
    readonly proxyview_degraded: (a: number) => [number, number];
    readonly proxyview_original: (a: number) => [number, number];
    readonly proxyview_psnr: (a: number) => number;
    readonly proxyview_ssim: (a: number) => number;
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
