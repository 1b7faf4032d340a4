// Decoder for the binary PBM (P4) frames the cart renders: one bit per pixel,
// rows padded to whole bytes, most significant bit first, 1 = lit.

export interface Bitmap {
  width: number;
  height: number;
  bits: Uint8Array; // row-major, one byte per pixel, 0 or 1
}

export function hexToBytes(hex: string): Uint8Array {
  if (hex.length % 2 !== 0 || /[^0-9a-fA-F]/.test(hex)) {
    throw new Error("bad hex");
  }
  const out = new Uint8Array(hex.length / 2);
  for (let i = 0; i < out.length; i++) {
    out[i] = parseInt(hex.slice(2 * i, 2 * i + 2), 16);
  }
  return out;
}

const WS = new Set([0x20, 0x09, 0x0a, 0x0d]);

export function decodePbm(data: Uint8Array): Bitmap {
  if (data[0] !== 0x50 || data[1] !== 0x34) throw new Error("not P4");
  let pos = 2;
  const readInt = (): number => {
    while (pos < data.length && WS.has(data[pos]!)) pos++;
    const start = pos;
    while (pos < data.length && data[pos]! >= 0x30 && data[pos]! <= 0x39) pos++;
    if (pos === start) throw new Error("bad header");
    return parseInt(String.fromCharCode(...data.subarray(start, pos)), 10);
  };
  const width = readInt();
  const height = readInt();
  pos++; // single whitespace byte separates header and raster
  const rowBytes = Math.ceil(width / 8);
  if (data.length - pos < rowBytes * height) throw new Error("short raster");
  const bits = new Uint8Array(width * height);
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      const byte = data[pos + y * rowBytes + (x >> 3)]!;
      bits[y * width + x] = (byte >> (7 - (x & 7))) & 1;
    }
  }
  return { width, height, bits };
}

export function decodePbmHex(hex: string): Bitmap {
  return decodePbm(hexToBytes(hex));
}
