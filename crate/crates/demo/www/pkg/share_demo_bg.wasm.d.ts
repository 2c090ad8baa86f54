/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_democity_free: (a: number, b: number) => void;
export const democity_availability: (a: number, b: number) => [number, number, number, number];
export const democity_bounds: (a: number) => [number, number];
export const democity_capacities: (a: number) => [number, number];
export const democity_context_edges: (a: number) => [number, number];
export const democity_labeled: (a: number) => [number, number];
export const democity_lot_count: (a: number) => number;
export const democity_new: (a: number, b: number, c: number) => [number, number, number];
export const democity_positions: (a: number) => [number, number];
export const democity_propagated: (a: number, b: number, c: number) => [number, number, number, number];
export const democity_steps: (a: number) => number;
export const democity_steps_per_day: (a: number) => number;
export const fuse: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_start: () => void;
