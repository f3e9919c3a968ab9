/** Vision backbone registry: pooled embedding widths and preprocessing. */

export interface BackboneSpec {
  name: string;
  /** Width of the pooled feature vector this backbone emits. */
  embeddingSize: number;
  /** Side length images are resized to before encoding. */
  inputSize: number;
  /** Per-channel normalization applied after scaling pixels to [0, 1]. */
  mean: [number, number, number];
  std: [number, number, number];
}

const IMAGENET_MEAN: [number, number, number] = [0.485, 0.456, 0.406];
const IMAGENET_STD: [number, number, number] = [0.229, 0.224, 0.225];

const SIZES: Record<string, number> = {
  ResNet18: 512,
  ResNet34: 512,
  ResNet50: 2048,
  ResNet101: 2048,
  ResNet152: 2048,
  EfficientNetB0: 320,
  EfficientNetB1: 320,
  EfficientNetB2: 352,
  EfficientNetB3: 384,
  EfficientNetB4: 448,
  EfficientNetB5: 512,
  MobileNetV2: 320,
  ViTBase: 768,
  ViTLarge: 1024,
  DinoV2Small: 384,
  DinoV2Base: 768,
  DinoV2Large: 1024,
};

export const BACKBONES: Record<string, BackboneSpec> = Object.fromEntries(
  Object.entries(SIZES).map(([name, embeddingSize]) => [
    name,
    { name, embeddingSize, inputSize: 224, mean: IMAGENET_MEAN, std: IMAGENET_STD },
  ]),
);

export class BackboneUnavailable extends Error {}

export function getBackbone(name: string): BackboneSpec {
  const spec = BACKBONES[name];
  if (!spec) {
    const known = Object.keys(BACKBONES).join(', ');
    throw new BackboneUnavailable(`unknown backbone '${name}' (known: ${known})`);
  }
  return spec;
}
