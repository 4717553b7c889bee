export { readTensor, writeTensor, Tensor, TensorFormatError } from './sltf';
export { readPpm, PpmImage } from './ppm';
export { SeededConvModel, SegmentationModel, ModelSpec, loadModelSpec } from './model';
export { exportImages, ExportManifest, ExportedImage } from './export';
