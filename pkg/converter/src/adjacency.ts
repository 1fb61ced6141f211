/**
 * Gaussian-kernel adjacency from sensor distances.
 *
 * w(i, j) = exp(-cost^2 / sigma^2) with sigma the standard deviation of
 * all costs, thresholded at 0.1 (the usual construction for PeMS-style
 * distance files). Self loops are dropped; --symmetrize keeps the larger
 * weight of the two directions on both.
 */

import type { Edge } from './portable.js';

export interface CostEdge {
  from: number;
  to: number;
  cost: number;
}

export const WEIGHT_THRESHOLD = 0.1;

export function parseEdgeCsv(text: string): CostEdge[] {
  const lines = text.trim().split(/\r?\n/);
  if (lines.length === 0 || !/^(from,to,cost|src,dst,weight)$/i.test(lines[0].trim())) {
    throw new Error(`edge file must start with a "from,to,cost" header, got "${lines[0]}"`);
  }
  const edges: CostEdge[] = [];
  for (let i = 1; i < lines.length; i++) {
    const line = lines[i].trim();
    if (!line) continue;
    const parts = line.split(',');
    if (parts.length !== 3) {
      throw new Error(`edge file line ${i + 1}: expected 3 columns, got ${parts.length}`);
    }
    const from = Number.parseInt(parts[0], 10);
    const to = Number.parseInt(parts[1], 10);
    const cost = Number.parseFloat(parts[2]);
    if (!Number.isInteger(from) || !Number.isInteger(to) || !Number.isFinite(cost)) {
      throw new Error(`edge file line ${i + 1}: malformed row "${line}"`);
    }
    edges.push({ from, to, cost });
  }
  return edges;
}

export function gaussianKernelEdges(
  costEdges: CostEdge[],
  nNodes: number,
  symmetrize: boolean,
): Edge[] {
  for (const edge of costEdges) {
    if (edge.from < 0 || edge.to < 0 || edge.from >= nNodes || edge.to >= nNodes) {
      throw new Error(
        `edge ${edge.from}->${edge.to} is out of range for ${nNodes} nodes ` +
        `(signal tensor defines the node count)`,
      );
    }
  }
  const costs = costEdges.map((e) => e.cost);
  const mean = costs.reduce((a, b) => a + b, 0) / costs.length;
  const sigma = Math.sqrt(
    costs.reduce((a, c) => a + (c - mean) * (c - mean), 0) / costs.length,
  );
  const divisor = sigma > 0 ? sigma * sigma : 1;

  const weights = new Map<string, Edge>();
  const put = (src: number, dst: number, weight: number) => {
    const key = `${src},${dst}`;
    const existing = weights.get(key);
    if (!existing || existing.weight < weight) {
      weights.set(key, { src, dst, weight });
    }
  };
  for (const { from, to, cost } of costEdges) {
    if (from === to) continue;
    const weight = Math.exp(-(cost * cost) / divisor);
    if (weight < WEIGHT_THRESHOLD) continue;
    put(from, to, weight);
    if (symmetrize) {
      put(to, from, weight);
    }
  }
  return [...weights.values()];
}
