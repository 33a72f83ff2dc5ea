#!/usr/bin/env node
import { writeFileSync } from 'node:fs'

import yargs from 'yargs'
import { hideBin } from 'yargs/helpers'

import { dumpFeatures, parseLayers } from './dump.js'

async function main(): Promise<void> {
  await yargs(hideBin(process.argv))
    .command(
      'dump',
      'run the net over a manifest and write an HFRS feature store',
      (cmd) =>
        cmd
          .option('manifest', { type: 'string', demandOption: true })
          .option('net', { type: 'string', default: 'seeded-32' })
          .option('layers', { type: 'string', default: 'fcr1,fcr2,conv' })
          .option('scales', { type: 'number', choices: [5, 10], default: 5 })
          .option('dim', { type: 'number', default: 32 })
          .option('out', { type: 'string', demandOption: true }),
      (argv) => {
        const buf = dumpFeatures({
          manifestPath: argv.manifest,
          netId: argv.net,
          layers: parseLayers(argv.layers),
          scaleCount: argv.scales as 5 | 10,
          dim: argv.dim,
        })
        writeFileSync(argv.out, buf)
        console.log(`wrote ${buf.length} bytes to ${argv.out}`)
      },
    )
    .demandCommand(1)
    .strict()
    .fail((msg, err) => {
      console.error(`error: ${msg ?? err?.message}`)
      process.exit(2)
    })
    .parse()
}

main().catch((err) => {
  console.error(`runtime error: ${err?.message ?? err}`)
  process.exit(1)
})
