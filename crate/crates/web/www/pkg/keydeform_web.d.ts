/* tslint:disable */
/* eslint-disable */

export class Demo {
    free(): void;
    [Symbol.dispose](): void;
    cage(): Float64Array;
    cloud(): Float64Array;
    faces(): Uint32Array;
    /**
     * Per-point distance from the surface cloud to its nearest of `j`
     * farthest point samples.
     */
    fpsHeat(j: number): Float64Array;
    fpsIndices(j: number): Uint32Array;
    keypoints(): Float64Array;
    moveKeypoint(index: number, x: number, y: number, z: number, sync: boolean): void;
    /**
     * `family` is `winged`, `table` or `box`.
     */
    constructor(family: string, seed: number);
    numBases(): number;
    reset(): void;
    /**
     * Prior offsets in standard deviations, one per basis.
     */
    setPrior(sigmas: Float64Array): void;
    /**
     * Deformed mesh vertices, flattened `xyz`.
     */
    vertices(): Float64Array;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demo_free: (a: number, b: number) => void;
    readonly demo_cage: (a: number) => [number, number, number, number];
    readonly demo_cloud: (a: number) => [number, number];
    readonly demo_faces: (a: number) => [number, number];
    readonly demo_fpsHeat: (a: number, b: number) => [number, number, number, number];
    readonly demo_fpsIndices: (a: number, b: number) => [number, number, number, number];
    readonly demo_keypoints: (a: number) => [number, number];
    readonly demo_moveKeypoint: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number];
    readonly demo_new: (a: number, b: number, c: number) => [number, number, number];
    readonly demo_numBases: (a: number) => number;
    readonly demo_reset: (a: number) => void;
    readonly demo_setPrior: (a: number, b: number, c: number) => [number, number];
    readonly demo_vertices: (a: number) => [number, number, number, number];
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
