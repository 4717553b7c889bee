#!/usr/bin/env node
// suplid-export export --images <dir> --model <spec.json> --out <dir>

import { parseArgs } from 'util';

import { exportImages } from './export';
import { SeededConvModel, loadModelSpec } from './model';

async function main(): Promise<number> {
  const argv = process.argv.slice(2);
  if (argv[0] !== 'export') {
    process.stderr.write('usage: suplid-export export --images <dir> --model <spec.json> --out <dir>\n');
    return argv[0] === '--help' || argv[0] === '-h' ? 0 : 1;
  }
  let values;
  try {
    ({ values } = parseArgs({
      args: argv.slice(1),
      options: {
        images: { type: 'string' },
        model: { type: 'string' },
        out: { type: 'string' },
      },
    }));
  } catch (err) {
    process.stderr.write(`error: ${(err as Error).message}\n`);
    return 1;
  }
  if (!values.images || !values.model || !values.out) {
    process.stderr.write('error: --images, --model and --out are required\n');
    return 1;
  }
  try {
    const spec = loadModelSpec(values.model);
    const manifest = await exportImages(values.images, new SeededConvModel(spec), values.out);
    process.stdout.write(
      `exported ${manifest.images.length} image(s): D=${manifest.D}, K=${manifest.K}, ` +
        `features ${manifest.Hf}x${manifest.Wf}, logits ${manifest.H}x${manifest.W}\n`,
    );
    return 0;
  } catch (err) {
    process.stderr.write(`error: ${(err as Error).message}\n`);
    return 1;
  }
}

main().then((code) => process.exit(code));
