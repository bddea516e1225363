#!/usr/bin/env node
// Compile the fixture contracts and write test bundles.
//
// Usage:  cd tools && npm install solc@0.8.21 && node gen_fixtures.js
//
// Outputs, relative to the repository root:
//   tests/fixtures/bundles/<address>/source.sol
//   tests/fixtures/bundles/<address>/runtime.hex
//   tests/fixtures/bundles/<address>/meta.json
//   tests/fixtures/ground_truth.json   (selector oracle straight from solc)

"use strict";

const fs = require("fs");
const path = require("path");
const solc = require("solc");

const ROOT = path.resolve(__dirname, "..");
const SRC_DIR = path.join(__dirname, "fixture_sources");
const OUT_DIR = path.join(ROOT, "tests", "fixtures", "bundles");

const FIXTURES = [
  { address: "0x0000000000000000000000000000000000001001", file: "Token.sol", contract: "Token", optimizer: { enabled: false, runs: 200 } },
  { address: "0x0000000000000000000000000000000000001002", file: "Gallery.sol", contract: "Gallery", optimizer: { enabled: false, runs: 200 } },
  { address: "0x0000000000000000000000000000000000001003", file: "Vault.sol", contract: "Vault", optimizer: { enabled: false, runs: 200 } },
  { address: "0x0000000000000000000000000000000000001004", file: "Vault.sol", contract: "Vault", optimizer: { enabled: true, runs: 200 } },
  { address: "0x0000000000000000000000000000000000001005", file: "Sink.sol", contract: "Sink", optimizer: { enabled: false, runs: 200 } },
  { address: "0x0000000000000000000000000000000000001006", file: "Counter.sol", contract: "Counter", optimizer: { enabled: false, runs: 200 } },
];

function compilerVersionTag() {
  // e.g. "0.8.21+commit.d9974bed.Emscripten.clang" -> "v0.8.21+commit.d9974bed"
  const long = solc.version();
  const m = long.match(/^(\d+\.\d+\.\d+\+commit\.[0-9a-f]+)/);
  return "v" + (m ? m[1] : long);
}

function compile(fixture, source) {
  const input = {
    language: "Solidity",
    sources: { [fixture.file]: { content: source } },
    settings: {
      optimizer: fixture.optimizer,
      evmVersion: "shanghai",
      outputSelection: {
        "*": { "*": ["evm.deployedBytecode.object", "evm.methodIdentifiers"] },
      },
    },
  };
  const output = JSON.parse(solc.compile(JSON.stringify(input)));
  const errors = (output.errors || []).filter((e) => e.severity === "error");
  if (errors.length) {
    for (const e of errors) console.error(e.formattedMessage);
    process.exit(1);
  }
  for (const e of output.errors || []) {
    if (e.severity === "warning") console.error("warning: " + e.message.split("\n")[0]);
  }
  return output.contracts[fixture.file][fixture.contract];
}

function main() {
  fs.mkdirSync(OUT_DIR, { recursive: true });
  const groundTruth = { compiler_version: compilerVersionTag(), contracts: {} };

  for (const fixture of FIXTURES) {
    const source = fs.readFileSync(path.join(SRC_DIR, fixture.file), "utf8");
    const artifact = compile(fixture, source);
    const runtime = artifact.evm.deployedBytecode.object;
    if (!runtime || runtime.length === 0) {
      console.error(`no runtime bytecode for ${fixture.contract}`);
      process.exit(1);
    }
    const bundleDir = path.join(OUT_DIR, fixture.address);
    fs.mkdirSync(bundleDir, { recursive: true });
    fs.writeFileSync(path.join(bundleDir, "source.sol"), source);
    fs.writeFileSync(path.join(bundleDir, "runtime.hex"), runtime + "\n");
    fs.writeFileSync(
      path.join(bundleDir, "meta.json"),
      JSON.stringify(
        {
          compiler_version: groundTruth.compiler_version,
          optimizer: fixture.optimizer,
        },
        null,
        2
      ) + "\n"
    );
    groundTruth.contracts[fixture.address] = {
      contract: fixture.contract,
      file: fixture.file,
      optimizer: fixture.optimizer,
      runtime_bytes: runtime.length / 2,
      selectors: artifact.evm.methodIdentifiers || {},
    };
    console.log(
      `${fixture.address} ${fixture.contract}${fixture.optimizer.enabled ? " (optimized)" : ""}: ` +
        `${runtime.length / 2} bytes, ${Object.keys(artifact.evm.methodIdentifiers || {}).length} selectors`
    );
  }

  fs.writeFileSync(
    path.join(ROOT, "tests", "fixtures", "ground_truth.json"),
    JSON.stringify(groundTruth, null, 2) + "\n"
  );
  console.log("ground truth written");
}

main();
