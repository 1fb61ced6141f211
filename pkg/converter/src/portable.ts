/**
 * Writers for the portable dataset format.
 *
 * signal.bin: magic "GTDS1" | u32 N | u32 D | u32 T | u32 step_seconds |
 * N*D*T float32 little-endian, node-major / feature-next / time-last.
 * graph.csv: header "src,dst,weight", zero-based indices, sorted rows.
 */

const SIGNAL_MAGIC = 'GTDS1';

export function encodeSignal(
  values: Float32Array,
  nNodes: number,
  nFeatures: number,
  nSteps: number,
  stepSeconds: number,
): Buffer {
  if (values.length !== nNodes * nFeatures * nSteps) {
    throw new Error(
      `signal payload has ${values.length} values, expected ${nNodes * nFeatures * nSteps}`,
    );
  }
  const header = Buffer.alloc(5 + 16);
  header.write(SIGNAL_MAGIC, 0, 'ascii');
  header.writeUInt32LE(nNodes, 5);
  header.writeUInt32LE(nFeatures, 9);
  header.writeUInt32LE(nSteps, 13);
  header.writeUInt32LE(stepSeconds, 17);
  const payload = Buffer.alloc(values.length * 4);
  for (let i = 0; i < values.length; i++) {
    payload.writeFloatLE(values[i], 4 * i);
  }
  return Buffer.concat([header, payload]);
}

export interface Edge {
  src: number;
  dst: number;
  weight: number;
}

export function encodeGraphCsv(edges: Edge[]): string {
  const rows = [...edges].sort((a, b) => a.src - b.src || a.dst - b.dst);
  const lines = ['src,dst,weight'];
  for (const edge of rows) {
    lines.push(`${edge.src},${edge.dst},${edge.weight}`);
  }
  return lines.join('\n') + '\n';
}

export function encodeMeta(meta: {
  nodeIds: string[];
  featureIndex: number;
  stepSeconds: number;
  source: string;
}): string {
  return (
    JSON.stringify(
      {
        node_ids: meta.nodeIds,
        impute_zeros: true,
        feature_index: meta.featureIndex,
        step_seconds: meta.stepSeconds,
        source: meta.source,
      },
      null,
      2,
    ) + '\n'
  );
}
