/* tslint:disable */
/* eslint-disable */

/**
 * A generated city with its series and graphs.
 */
export class DemoCity {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Observed availability ratio `PA / capacity` of every lot.
     */
    availability(step: number): Float64Array;
    /**
     * `[min_x, min_y, max_x, max_y]` in km.
     */
    bounds(): Float64Array;
    capacities(): Uint32Array;
    /**
     * Flattened `(i, j)` pairs with `i < j`, one per contextual edge.
     */
    context_edges(): Uint32Array;
    /**
     * 1 for lots with a real-time sensor.
     */
    labeled(): Uint8Array;
    lot_count(): number;
    constructor(lots: number, labeled_fraction: number, seed: number);
    /**
     * Interleaved `x, y` per lot in km.
     */
    positions(): Float64Array;
    propagated(step: number, sharpness: number): Float64Array;
    steps(): number;
    steps_per_day(): number;
}

export function fuse(sp: Float64Array, tp: Float64Array): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_democity_free: (a: number, b: number) => void;
    readonly democity_availability: (a: number, b: number) => [number, number, number, number];
    readonly democity_bounds: (a: number) => [number, number];
    readonly democity_capacities: (a: number) => [number, number];
    readonly democity_context_edges: (a: number) => [number, number];
    readonly democity_labeled: (a: number) => [number, number];
    readonly democity_lot_count: (a: number) => number;
    readonly democity_new: (a: number, b: number, c: number) => [number, number, number];
    readonly democity_positions: (a: number) => [number, number];
    readonly democity_propagated: (a: number, b: number, c: number) => [number, number, number, number];
    readonly democity_steps: (a: number) => number;
    readonly democity_steps_per_day: (a: number) => number;
    readonly fuse: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
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
