/**
 * Orchestration: npz archive + distance csv -> portable dataset directory.
 */

import { mkdirSync, readFileSync, writeFileSync } from 'node:fs';
import { basename, join } from 'node:path';

import { gaussianKernelEdges, parseEdgeCsv } from './adjacency.js';
import { readNpz } from './npz.js';
import { encodeGraphCsv, encodeMeta, encodeSignal } from './portable.js';

export interface ConvertOptions {
  npzPath: string;
  edgesPath: string;
  outDir: string;
  featureIndex: number;
  symmetrize: boolean;
  key: string;
  stepSeconds: number;
}

export interface ConvertResult {
  nNodes: number;
  nSteps: number;
  nFeatures: number;
  edgesKept: number;
}

export function convert(options: ConvertOptions): ConvertResult {
  const arrays = readNpz(readFileSync(options.npzPath));
  const array = arrays.get(options.key);
  if (!array) {
    const available = [...arrays.keys()].join(', ');
    throw new Error(`npz has no array named "${options.key}" (available: ${available})`);
  }
  if (array.shape.length !== 3) {
    throw new Error(
      `expected a rank-3 tensor (time, node, feature), got shape (${array.shape.join(', ')})`,
    );
  }
  const [nSteps, nNodes, nFeatures] = array.shape;
  if (options.featureIndex < 0 || options.featureIndex >= nFeatures) {
    throw new Error(
      `feature index ${options.featureIndex} out of range: tensor has ${nFeatures} feature(s)`,
    );
  }

  // transpose (T, N, D)[..., feature] -> (N, 1, T) and cast to float32
  const values = new Float32Array(nNodes * nSteps);
  for (let node = 0; node < nNodes; node++) {
    for (let t = 0; t < nSteps; t++) {
      values[node * nSteps + t] =
        Math.fround(array.data[(t * nNodes + node) * nFeatures + options.featureIndex]);
    }
  }

  const costEdges = parseEdgeCsv(readFileSync(options.edgesPath, 'utf8'));
  const edges = gaussianKernelEdges(costEdges, nNodes, options.symmetrize);

  mkdirSync(options.outDir, { recursive: true });
  writeFileSync(
    join(options.outDir, 'signal.bin'),
    encodeSignal(values, nNodes, 1, nSteps, options.stepSeconds),
  );
  writeFileSync(join(options.outDir, 'graph.csv'), encodeGraphCsv(edges));
  writeFileSync(
    join(options.outDir, 'meta.json'),
    encodeMeta({
      nodeIds: Array.from({ length: nNodes }, (_, i) => String(i)),
      featureIndex: options.featureIndex,
      stepSeconds: options.stepSeconds,
      source: basename(options.npzPath),
    }),
  );
  return { nNodes, nSteps, nFeatures, edgesKept: edges.length };
}
