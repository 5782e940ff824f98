/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_proxyview_free: (a: number, b: number) => void;
export const bd_from_csv: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const codec_proxy_view: (a: number, b: number, c: number) => [number, number, number];
export const error_map: (a: number, b: number, c: number, d: number) => [number, number];
export const fuse_constant: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const grey_to_rgba: (a: number, b: number) => [number, number];
export const proxyview_degraded: (a: number) => [number, number];
export const proxyview_original: (a: number) => [number, number];
export const proxyview_psnr: (a: number) => number;
export const proxyview_ssim: (a: number) => number;
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
