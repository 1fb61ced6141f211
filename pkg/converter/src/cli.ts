#!/usr/bin/env node
/**
 * convert --npz PATH --edges PATH --out DIR --feature 0 [--symmetrize]
 *         [--key data] [--step-seconds 300]
 */

import { convert } from './convert.js';

function usage(): string {
  return (
    'usage: pems-convert --npz PATH --edges PATH --out DIR ' +
    '[--feature N] [--symmetrize] [--key NAME] [--step-seconds S]'
  );
}

export function main(argv: string[]): number {
  const options = {
    npzPath: '',
    edgesPath: '',
    outDir: '',
    featureIndex: 0,
    symmetrize: false,
    key: 'data',
    stepSeconds: 300,
  };
  for (let i = 0; i < argv.length; i++) {
    const flag = argv[i];
    const next = () => {
      const value = argv[++i];
      if (value === undefined) throw new Error(`missing value for ${flag}`);
      return value;
    };
    switch (flag) {
      case '--npz': options.npzPath = next(); break;
      case '--edges': options.edgesPath = next(); break;
      case '--out': options.outDir = next(); break;
      case '--feature': options.featureIndex = Number.parseInt(next(), 10); break;
      case '--key': options.key = next(); break;
      case '--step-seconds': options.stepSeconds = Number.parseInt(next(), 10); break;
      case '--symmetrize': options.symmetrize = true; break;
      case '--help':
      case '-h':
        console.log(usage());
        return 0;
      default:
        console.error(`unknown flag ${flag}\n${usage()}`);
        return 2;
    }
  }
  if (!options.npzPath || !options.edgesPath || !options.outDir) {
    console.error(usage());
    return 2;
  }
  try {
    const result = convert(options);
    console.log(
      `wrote ${options.outDir}: ${result.nNodes} nodes, ${result.nSteps} steps, ` +
      `feature ${options.featureIndex} of ${result.nFeatures}, ${result.edgesKept} edges`,
    );
    return 0;
  } catch (error) {
    console.error(`error: ${error instanceof Error ? error.message : error}`);
    return 1;
  }
}

import { fileURLToPath } from 'node:url';
if (process.argv[1] && fileURLToPath(import.meta.url) === process.argv[1]) {
  process.exit(main(process.argv.slice(2)));
}
