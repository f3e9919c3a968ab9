#!/usr/bin/env node
/** extract-embeddings --images <dir> --backbone <name> --out <csv>
 *
 * Optional: --ids <csv> (id,filename mapping), --weights <json>
 * (exported projection weights), --pretrained (require a real
 * checkpoint; errors when none is obtainable).
 */

import { BackboneUnavailable, getBackbone } from './backbones.js';
import { extractEmbeddings } from './extract.js';

function parseArgs(argv: string[]): Record<string, string | boolean> {
  const args: Record<string, string | boolean> = {};
  for (let i = 0; i < argv.length; i++) {
    const token = argv[i];
    if (!token.startsWith('--')) {
      throw new Error(`unexpected argument: ${token}`);
    }
    const key = token.slice(2);
    if (key === 'pretrained') {
      args[key] = true;
    } else {
      const value = argv[++i];
      if (value === undefined) {
        throw new Error(`--${key} needs a value`);
      }
      args[key] = value;
    }
  }
  return args;
}

export function main(argv: string[]): number {
  let args: Record<string, string | boolean>;
  try {
    args = parseArgs(argv);
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    return 1;
  }
  const images = args['images'];
  const backbone = args['backbone'];
  const out = args['out'];
  if (typeof images !== 'string' || typeof backbone !== 'string' || typeof out !== 'string') {
    console.error('usage: extract-embeddings --images <dir> --backbone <name> --out <csv> [--ids <csv>] [--weights <json>] [--pretrained]');
    return 1;
  }
  try {
    const spec = getBackbone(backbone);
    const result = extractEmbeddings(images, spec, out, {
      idsPath: typeof args['ids'] === 'string' ? (args['ids'] as string) : undefined,
      weightsPath: typeof args['weights'] === 'string' ? (args['weights'] as string) : undefined,
      pretrained: args['pretrained'] === true,
    });
    console.log(
      `wrote ${result.rows} x ${spec.embeddingSize} embeddings to ${result.outPath}` +
        (result.skipped.length ? ` (skipped ${result.skipped.length} unreadable)` : ''),
    );
    return 0;
  } catch (err) {
    if (err instanceof BackboneUnavailable) {
      console.error(`error: ${err.message}`);
      return 1;
    }
    console.error(`error: ${err}`);
    return 1;
  }
}

import { pathToFileURL } from 'url';

if (process.argv[1] && import.meta.url === pathToFileURL(process.argv[1]).href) {
  process.exit(main(process.argv.slice(2)));
}
