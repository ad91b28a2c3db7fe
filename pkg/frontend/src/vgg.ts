/**
 * VGG16 feature-extractor graph builder.
 *
 * Emits the 13-conv VGG16 trunk with ImageNet normalization baked in as
 * Sub/Div constants, tapping the post-activation tensors conv1_2, conv2_2,
 * conv3_3, conv4_3 and conv5_3 as the five named graph outputs
 * (64/128/256/512/512 channels). Weights are He-initialized from a seeded
 * PRNG: the file is a deterministic function of the seed.
 */

import {
  attrInts,
  graphProto,
  modelProto,
  nodeProto,
  tensorProto,
  valueInfo,
} from './proto';
import { Rng } from './rng';

export interface StageSpec {
  convs: number[];
  tap: string;
}

/** torchvision configuration "D", grouped per pooling stage. */
export const VGG16_STAGES: StageSpec[] = [
  { convs: [64, 64], tap: 'conv1_2' },
  { convs: [128, 128], tap: 'conv2_2' },
  { convs: [256, 256, 256], tap: 'conv3_3' },
  { convs: [512, 512, 512], tap: 'conv4_3' },
  { convs: [512, 512, 512], tap: 'conv5_3' },
];

export const OUTPUT_NAMES = VGG16_STAGES.map((s) => s.tap);
export const OUTPUT_CHANNELS = VGG16_STAGES.map((s) => s.convs[s.convs.length - 1]);

export const IMAGENET_MEAN = [0.485, 0.456, 0.406];
export const IMAGENET_STD = [0.229, 0.224, 0.225];

const CONV_ATTRS = [
  attrInts('kernel_shape', [3, 3]),
  attrInts('strides', [1, 1]),
  attrInts('pads', [1, 1, 1, 1]),
  attrInts('dilations', [1, 1]),
];

const POOL_ATTRS = [attrInts('kernel_shape', [2, 2]), attrInts('strides', [2, 2])];

export function buildModel(seed: number): Buffer {
  const rng = new Rng(seed);
  const nodes: Buffer[] = [];
  const initializers: Buffer[] = [
    tensorProto('imagenet_mean', [1, 3, 1, 1], Float32Array.from(IMAGENET_MEAN)),
    tensorProto('imagenet_std', [1, 3, 1, 1], Float32Array.from(IMAGENET_STD)),
  ];
  nodes.push(nodeProto('Sub', ['input', 'imagenet_mean'], ['centered'], [], 'normalize_sub'));
  nodes.push(nodeProto('Div', ['centered', 'imagenet_std'], ['scaled'], [], 'normalize_div'));

  let prev = 'scaled';
  let cIn = 3;
  const outputs: Buffer[] = [];
  VGG16_STAGES.forEach((stage, stageIdx) => {
    stage.convs.forEach((cOut, convIdx) => {
      const layer = `conv${stageIdx + 1}_${convIdx + 1}`;
      const wName = `${layer}.weight`;
      const bName = `${layer}.bias`;
      const fanIn = cIn * 3 * 3;
      const std = Math.sqrt(2.0 / fanIn);
      initializers.push(
        tensorProto(wName, [cOut, cIn, 3, 3], rng.gaussians(cOut * fanIn, std)),
      );
      initializers.push(tensorProto(bName, [cOut], new Float32Array(cOut)));
      const convOut = `${layer}.pre`;
      const reluOut = convIdx === stage.convs.length - 1 ? stage.tap : `${layer}.act`;
      nodes.push(nodeProto('Conv', [prev, wName, bName], [convOut], CONV_ATTRS, layer));
      nodes.push(nodeProto('Relu', [convOut], [reluOut], [], `${layer}.relu`));
      prev = reluOut;
      cIn = cOut;
    });
    outputs.push(
      valueInfo(stage.tap, ['N', OUTPUT_CHANNELS[stageIdx], `h${stageIdx + 1}`, `w${stageIdx + 1}`]),
    );
    if (stageIdx < VGG16_STAGES.length - 1) {
      const poolOut = `pool${stageIdx + 1}`;
      nodes.push(nodeProto('MaxPool', [prev], [poolOut], POOL_ATTRS, poolOut));
      prev = poolOut;
    }
  });

  const graph = graphProto({
    nodes,
    initializers,
    inputs: [valueInfo('input', ['N', 3, 'H', 'W'])],
    outputs,
  });
  return modelProto(graph);
}
