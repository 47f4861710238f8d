#!/usr/bin/env node
/**
 * Command-line entry point.
 *
 *   export --insitu PATH --out PATH [--window-days 3] [--square-km 0.2]
 *          [--collection NAME] [--dry-run --fixtures DIR]
 *
 * Exit codes: 0 success, 2 input/validation/authentication error,
 * 3 unexpected runtime error.  Per-record retrieval problems are logged
 * to stderr and do not fail the run.
 */

import yargs from 'yargs';
import { hideBin } from 'yargs/helpers';
import { pathToFileURL } from 'node:url';

import { runExport, writeBandSamplesCsv } from './exportJob.js';
import { InSituFileError } from './insitu.js';
import { DEFAULT_COLLECTION, validateJob, type ExportJob } from './schema.js';
import { AuthError, EarthEngineSceneSource, FixtureSceneSource, type SceneSource } from './sources.js';

export const ACCESS_TOKEN_ENV = 'EE_ACCESS_TOKEN';

function buildSource(job: ExportJob): SceneSource {
  if (job.dryRun) {
    // validateJob guarantees fixturesDir is set for dry runs
    return new FixtureSceneSource(job.fixturesDir!);
  }
  const token = process.env[ACCESS_TOKEN_ENV];
  if (!token) {
    throw new AuthError(`authentication failure: set ${ACCESS_TOKEN_ENV} or use --dry-run`);
  }
  return new EarthEngineSceneSource({ collection: job.collection, accessToken: token });
}

async function runExportCommand(job: ExportJob): Promise<number> {
  const log = (message: string) => console.error(message);
  try {
    validateJob(job);
    const source = buildSource(job);
    const result = await runExport(job, source, log);
    writeBandSamplesCsv(job.outPath, result.rows);
    console.log(`band samples: ${result.rows.length}`);
    console.log(`records: ${result.recordCount}`);
    if (result.failures.length > 0) {
      console.log(`records with retrieval failures: ${result.failures.length}`);
    }
    return 0;
  } catch (err) {
    const message = err instanceof Error ? err.message : String(err);
    console.error(`error: ${message}`);
    if (err instanceof InSituFileError || err instanceof AuthError) return 2;
    const fsCode = (err as NodeJS.ErrnoException).code;
    if (fsCode === 'ENOENT') return 2; // a named input file is missing
    if (fsCode) return 3; // other I/O trouble
    return 2; // validation/configuration problem
  }
}

export async function main(argv: string[]): Promise<number> {
  let exitCode = 0;
  await yargs(argv)
    .scriptName('aquaboost-export')
    .command(
      'export',
      'extract windowed per-scene band means for every in-situ record',
      (cmd) => cmd
        .option('insitu', { type: 'string', demandOption: true, describe: 'in-situ records CSV' })
        .option('out', { type: 'string', demandOption: true, describe: 'output band-samples CSV' })
        .option('collection', { type: 'string', default: DEFAULT_COLLECTION, describe: 'image collection to query' })
        .option('window-days', { type: 'number', default: 3, describe: 'inclusive civil-date window half-width' })
        .option('square-km', { type: 'number', default: 0.2, describe: 'side of the sampling square in km' })
        .option('dry-run', { type: 'boolean', default: false, describe: 'serve scenes from local fixtures' })
        .option('fixtures', { type: 'string', describe: 'fixtures directory for --dry-run' }),
      async (args) => {
        const job: ExportJob = {
          insituPath: args.insitu,
          outPath: args.out,
          collection: args.collection,
          windowDays: args['window-days'],
          squareKm: args['square-km'],
          dryRun: args['dry-run'],
          fixturesDir: args.fixtures,
        };
        exitCode = await runExportCommand(job);
      },
    )
    .demandCommand(1, 'a command is required')
    .strict()
    .fail((msg, err) => {
      console.error(`error: ${msg ?? err?.message}`);
      process.exit(2);
    })
    .parseAsync();
  return exitCode;
}

const invokedDirectly =
  process.argv[1] !== undefined && import.meta.url === pathToFileURL(process.argv[1]).href;
if (invokedDirectly) {
  main(hideBin(process.argv)).then((code) => process.exit(code));
}
