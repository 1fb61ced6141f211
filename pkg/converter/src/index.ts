export { convert } from './convert.js';
export type { ConvertOptions, ConvertResult } from './convert.js';
export { readNpz } from './npz.js';
export type { NpyArray } from './npz.js';
export { gaussianKernelEdges, parseEdgeCsv, WEIGHT_THRESHOLD } from './adjacency.js';
export { encodeGraphCsv, encodeMeta, encodeSignal } from './portable.js';
