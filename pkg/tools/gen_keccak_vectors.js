// Generates tests/fixtures/keccak_vectors.json: (input hex, keccak-256 hex)
// pairs computed by js-sha3, an implementation independent of this package.
// Covers the empty message, short ASCII, function signatures, sponge-rate
// boundaries (the rate is 136 bytes), and seeded pseudo-random blobs.
"use strict";
const fs = require("fs");
const path = require("path");
const { keccak256 } = require("js-sha3");

function lcg(seed) {
  let s = BigInt(seed);
  const a = 6364136223846793005n;
  const c = 1442695040888963407n;
  const m = 1n << 64n;
  return () => {
    s = (a * s + c) % m;
    return Number((s >> 33n) & 0xffn);
  };
}

const inputs = [];
const pushStr = (s) => inputs.push(Buffer.from(s, "utf8"));
pushStr("");
pushStr("abc");
pushStr("testing");
pushStr("The quick brown fox jumps over the lazy dog");
pushStr("The quick brown fox jumps over the lazy dog.");
for (const sig of [
  "transfer(address,uint256)",
  "balanceOf(address)",
  "totalSupply()",
  "set(uint256)",
  "get()",
  "supportsInterface(bytes4)",
  "walletOfOwner(address)",
]) {
  pushStr(sig);
}
for (const n of [1, 16, 63, 64, 65, 127, 128, 135, 136, 137, 200, 271, 272, 273, 500, 1024]) {
  const rnd = lcg(1000 + n);
  const buf = Buffer.alloc(n);
  for (let i = 0; i < n; i++) buf[i] = rnd();
  inputs.push(buf);
}
const allBytes = Buffer.alloc(256);
for (let i = 0; i < 256; i++) allBytes[i] = i;
inputs.push(allBytes);

const vectors = inputs.map((buf) => ({
  input_hex: buf.toString("hex"),
  keccak256: keccak256(buf),
}));

const out = path.join(__dirname, "..", "tests", "fixtures", "keccak_vectors.json");
fs.writeFileSync(out, JSON.stringify(vectors, null, 2) + "\n");
console.log(`wrote ${vectors.length} vectors to ${out}`);
