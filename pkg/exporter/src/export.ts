import * as crypto from 'crypto';
import * as fs from 'fs';
import * as path from 'path';

import * as tf from '@tensorflow/tfjs';

import { SegmentationModel } from './model';
import { readPpm } from './ppm';
import { writeTensor } from './sltf';

export interface ExportedImage {
  stem: string;
  features: string;
  features_sha256: string;
  logits: string;
  logits_sha256: string;
}

export interface ExportManifest {
  model: string;
  layer: string;
  D: number;
  K: number;
  H: number;
  W: number;
  Hf: number;
  Wf: number;
  images: ExportedImage[];
}

function sha256(buf: Buffer): string {
  return crypto.createHash('sha256').update(buf).digest('hex');
}

function writeFileAtomic(target: string, payload: Buffer): void {
  const tmp = path.join(path.dirname(target), `.tmp-${path.basename(target)}`);
  fs.writeFileSync(tmp, payload);
  fs.renameSync(tmp, target);
}

export async function exportImages(
  imagesDir: string,
  model: SegmentationModel,
  outDir: string,
): Promise<ExportManifest> {
  const stems = fs
    .readdirSync(imagesDir)
    .filter((f) => f.endsWith('.ppm'))
    .sort()
    .map((f) => f.slice(0, -4));
  if (!stems.length) throw new Error(`no .ppm images in ${imagesDir}`);

  fs.mkdirSync(path.join(outDir, 'features'), { recursive: true });
  fs.mkdirSync(path.join(outDir, 'logits'), { recursive: true });

  const manifest: ExportManifest = {
    model: model.spec.model,
    layer: model.spec.layer,
    D: model.spec.feature_dim,
    K: model.spec.classes,
    H: 0,
    W: 0,
    Hf: 0,
    Wf: 0,
    images: [],
  };

  for (const stem of stems) {
    const ppm = readPpm(fs.readFileSync(path.join(imagesDir, `${stem}.ppm`)));
    if (manifest.H === 0) {
      manifest.H = ppm.height;
      manifest.W = ppm.width;
    } else if (ppm.height !== manifest.H || ppm.width !== manifest.W) {
      throw new Error(
        `image ${stem} is ${ppm.height}x${ppm.width}, expected ${manifest.H}x${manifest.W}`,
      );
    }
    const image = tf.tensor3d(ppm.data, [ppm.height, ppm.width, 3], 'int32') as tf.Tensor3D;
    const { features, logits } = model.run(image);
    image.dispose();

    const [hf, wf, d] = features.shape;
    if (d !== model.spec.feature_dim) throw new Error('feature width mismatch');
    if (manifest.Hf === 0) {
      manifest.Hf = hf;
      manifest.Wf = wf;
    }
    const featBuf = writeTensor(new Float32Array(await features.data()), [hf, wf, d]);
    const logitBuf = writeTensor(
      new Float32Array(await logits.data()),
      [ppm.height, ppm.width, model.spec.classes],
    );
    features.dispose();
    logits.dispose();

    const featPath = path.join(outDir, 'features', `${stem}.slt`);
    const logitPath = path.join(outDir, 'logits', `${stem}.slt`);
    writeFileAtomic(featPath, featBuf);
    writeFileAtomic(logitPath, logitBuf);
    manifest.images.push({
      stem,
      features: featPath,
      features_sha256: sha256(featBuf),
      logits: logitPath,
      logits_sha256: sha256(logitBuf),
    });
  }

  writeFileAtomic(
    path.join(outDir, 'export-manifest.json'),
    Buffer.from(JSON.stringify(manifest, null, 2)),
  );
  return manifest;
}
