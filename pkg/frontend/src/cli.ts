/** Export CLI: writes the seeded VGG16 feature-extractor ONNX file. */

import { mkdirSync, writeFileSync } from 'fs';
import { dirname, resolve } from 'path';
import { buildModel, OUTPUT_CHANNELS, OUTPUT_NAMES } from './vgg';

interface Args {
  out: string;
  seed: number;
}

export function parseArgs(argv: string[]): Args {
  let out = 'vgg16_features.onnx';
  let seed = 0;
  for (let i = 0; i < argv.length; i++) {
    switch (argv[i]) {
      case '--out':
        out = argv[++i];
        break;
      case '--seed':
        seed = Number(argv[++i]);
        break;
      case '--help':
      case '-h':
        console.log('usage: vgg-onnx-export [--out FILE] [--seed N]');
        process.exit(0);
        break;
      default:
        throw new Error(`unknown argument: ${argv[i]}`);
    }
  }
  if (!Number.isInteger(seed) || seed < 0) {
    throw new Error(`--seed must be a non-negative integer, got ${seed}`);
  }
  return { out, seed };
}

export function main(argv: string[]): void {
  const args = parseArgs(argv);
  const bytes = buildModel(args.seed);
  const target = resolve(args.out);
  mkdirSync(dirname(target), { recursive: true });
  writeFileSync(target, bytes);
  const mb = (bytes.length / (1024 * 1024)).toFixed(1);
  console.log(`wrote ${target} (${mb} MiB, seed ${args.seed})`);
  console.log(
    `outputs: ${OUTPUT_NAMES.map((n, i) => `${n}[${OUTPUT_CHANNELS[i]}]`).join(', ')}`,
  );
}

if (require.main === module) {
  try {
    main(process.argv.slice(2));
  } catch (e) {
    console.error(`error: ${e instanceof Error ? e.message : e}`);
    process.exit(2);
  }
}
