//! Fixed 34-byte sensor frame and a resynchronizing stream decoder.
//!
//! Layout (little-endian):
//!
//! | bytes  | field                                   |
//! |--------|-----------------------------------------|
//! | 0..2   | sync `0xAA 0x55`                        |
//! | 2      | version `0x01`                          |
//! | 3      | flags `0x00`                            |
//! | 4..8   | timestamp, ms (u32)                     |
//! | 8..12  | optical dx, dy (i16 counts)             |
//! | 12     | SQUAL (0..=169)                         |
//! | 13     | reserved `0x00`                         |
//! | 14..32 | accel, gyro, mag: 3 x i16 each          |
//! | 32..34 | CRC-16/CCITT-FALSE over bytes 0..32     |
//!
//! A `.3dt` trace file is these frames concatenated, exactly as on the wire.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec3;

pub const FRAME_LEN: usize = 34;
pub const SYNC: [u8; 2] = [0xAA, 0x55];
pub const VERSION: u8 = 0x01;
pub const SQUAL_MAX: u8 = 169;

const CRC_POLY: u16 = 0x1021;
const CRC_INIT: u16 = 0xFFFF;

const CRC_TABLE: [u16; 256] = {
    let mut table = [0u16; 256];
    let mut i = 0;
    while i < 256 {
        let mut crc = (i as u16) << 8;
        let mut bit = 0;
        while bit < 8 {
            crc = if crc & 0x8000 != 0 {
                (crc << 1) ^ CRC_POLY
            } else {
                crc << 1
            };
            bit += 1;
        }
        table[i] = crc;
        i += 1;
    }
    table
};

/// CRC-16/CCITT-FALSE (poly 0x1021, init 0xFFFF, no reflection, no xorout).
pub fn crc16(data: &[u8]) -> u16 {
    data.iter().fold(CRC_INIT, |crc, &b| {
        (crc << 8) ^ CRC_TABLE[((crc >> 8) as u8 ^ b) as usize]
    })
}

/// One timestamped device sample in raw sensor units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SensorFrame {
    pub timestamp_ms: u32,
    pub dx: i16,
    pub dy: i16,
    pub squal: u8,
    pub accel_raw: [i16; 3],
    pub gyro_raw: [i16; 3],
    pub mag_raw: [i16; 3],
}

impl SensorFrame {
    pub fn validate(&self) -> Result<()> {
        if self.squal > SQUAL_MAX {
            return Err(Error::SqualOutOfRange(self.squal));
        }
        Ok(())
    }
}

fn put_i16s(out: &mut [u8], vals: &[i16; 3]) {
    for (chunk, v) in out.chunks_exact_mut(2).zip(vals) {
        chunk.copy_from_slice(&v.to_le_bytes());
    }
}

fn get_i16(b: &[u8], at: usize) -> i16 {
    i16::from_le_bytes([b[at], b[at + 1]])
}

fn get_i16s(b: &[u8], at: usize) -> [i16; 3] {
    [get_i16(b, at), get_i16(b, at + 2), get_i16(b, at + 4)]
}

pub fn encode_frame(f: &SensorFrame) -> Result<[u8; FRAME_LEN]> {
    f.validate()?;
    let mut out = [0u8; FRAME_LEN];
    out[0..2].copy_from_slice(&SYNC);
    out[2] = VERSION;
    out[3] = 0x00;
    out[4..8].copy_from_slice(&f.timestamp_ms.to_le_bytes());
    out[8..10].copy_from_slice(&f.dx.to_le_bytes());
    out[10..12].copy_from_slice(&f.dy.to_le_bytes());
    out[12] = f.squal;
    out[13] = 0x00;
    put_i16s(&mut out[14..20], &f.accel_raw);
    put_i16s(&mut out[20..26], &f.gyro_raw);
    put_i16s(&mut out[26..32], &f.mag_raw);
    let crc = crc16(&out[..32]);
    out[32..34].copy_from_slice(&crc.to_le_bytes());
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Candidate {
    Valid(SensorFrame),
    BadCrc,
    BadHeader,
}

fn check_candidate(b: &[u8]) -> Candidate {
    debug_assert!(b.len() >= FRAME_LEN && b[0..2] == SYNC);
    let stored = u16::from_le_bytes([b[32], b[33]]);
    if crc16(&b[..32]) != stored {
        return Candidate::BadCrc;
    }
    if b[2] != VERSION || b[12] > SQUAL_MAX {
        return Candidate::BadHeader;
    }
    Candidate::Valid(SensorFrame {
        timestamp_ms: u32::from_le_bytes([b[4], b[5], b[6], b[7]]),
        dx: get_i16(b, 8),
        dy: get_i16(b, 10),
        squal: b[12],
        accel_raw: get_i16s(b, 14),
        gyro_raw: get_i16s(b, 20),
        mag_raw: get_i16s(b, 26),
    })
}

/// Running decoder counters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DecodeDiagnostics {
    pub frames: u64,
    pub crc_failures: u64,
    pub resyncs: u64,
    pub bytes_skipped: u64,
}

impl DecodeDiagnostics {
    pub fn is_clean(&self) -> bool {
        self.crc_failures == 0 && self.resyncs == 0 && self.bytes_skipped == 0
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plain struct serializes")
    }
}

/// Streaming decoder. Bytes may arrive in arbitrary chunks; partial frames
/// are buffered until the next call.
#[derive(Debug, Clone, Default)]
pub struct DecoderState {
    buf: Vec<u8>,
    skipping: bool,
    diag: DecodeDiagnostics,
}

impl DecoderState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn diagnostics(&self) -> DecodeDiagnostics {
        self.diag
    }

    /// Bytes held back waiting for the rest of a frame.
    pub fn pending(&self) -> usize {
        self.buf.len()
    }

    fn skip(&mut self, n: usize) {
        if n == 0 {
            return;
        }
        self.diag.bytes_skipped += n as u64;
        if !self.skipping {
            self.diag.resyncs += 1;
            self.skipping = true;
        }
    }

    /// Ends the stream: any buffered partial frame is counted as skipped.
    pub fn finish(&mut self) -> DecodeDiagnostics {
        let n = self.buf.len();
        self.skip(n);
        self.buf.clear();
        self.diag
    }
}

fn find_sync(b: &[u8]) -> Option<usize> {
    b.windows(2).position(|w| w == SYNC)
}

/// Feeds `bytes` to the decoder and returns every frame completed by them,
/// together with the cumulative diagnostics.
pub fn decode_stream(
    bytes: &[u8],
    state: &mut DecoderState,
) -> (Vec<SensorFrame>, DecodeDiagnostics) {
    let mut buf = std::mem::take(&mut state.buf);
    buf.extend_from_slice(bytes);
    let mut frames = Vec::with_capacity(buf.len() / FRAME_LEN);
    let mut pos = 0;

    loop {
        let rest = &buf[pos..];
        match find_sync(rest) {
            None => {
                // keep a trailing first sync byte, it may pair with the next chunk
                let keep = usize::from(rest.last() == Some(&SYNC[0]));
                let drop = rest.len() - keep;
                state.skip(drop);
                pos += drop;
                break;
            }
            Some(at) => {
                state.skip(at);
                pos += at;
            }
        }
        if buf.len() - pos < FRAME_LEN {
            break;
        }
        match check_candidate(&buf[pos..pos + FRAME_LEN]) {
            Candidate::Valid(frame) => {
                frames.push(frame);
                state.diag.frames += 1;
                state.skipping = false;
                pos += FRAME_LEN;
            }
            Candidate::BadCrc => {
                state.diag.crc_failures += 1;
                state.skip(1);
                pos += 1;
            }
            Candidate::BadHeader => {
                state.skip(1);
                pos += 1;
            }
        }
    }

    buf.drain(..pos);
    state.buf = buf;
    (frames, state.diag)
}

/// Decodes a complete trace; a truncated tail is counted as skipped bytes.
pub fn decode_trace(bytes: &[u8]) -> (Vec<SensorFrame>, DecodeDiagnostics) {
    let mut state = DecoderState::new();
    let (frames, _) = decode_stream(bytes, &mut state);
    let diag = state.finish();
    (frames, diag)
}

pub fn encode_trace(frames: &[SensorFrame]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(frames.len() * FRAME_LEN);
    for f in frames {
        out.extend_from_slice(&encode_frame(f)?);
    }
    Ok(out)
}

/// Raw-LSB to physical unit factors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleConfig {
    pub counts_per_inch: f64,
    pub accel_g_per_lsb: f64,
    pub gyro_dps_per_lsb: f64,
    pub mag_gauss_per_lsb: f64,
}

impl Default for ScaleConfig {
    fn default() -> Self {
        Self {
            counts_per_inch: 400.0,
            accel_g_per_lsb: 1.0 / 16384.0,
            gyro_dps_per_lsb: 0.00875,
            mag_gauss_per_lsb: 1.0 / 1100.0,
        }
    }
}

impl ScaleConfig {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("counts_per_inch", self.counts_per_inch),
            ("accel_g_per_lsb", self.accel_g_per_lsb),
            ("gyro_dps_per_lsb", self.gyro_dps_per_lsb),
            ("mag_gauss_per_lsb", self.mag_gauss_per_lsb),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(name, format!("must be > 0, got {v}")));
            }
        }
        Ok(())
    }

    pub fn mm_per_count(&self) -> f64 {
        25.4 / self.counts_per_inch
    }
}

/// A frame converted to physical units; optical deltas stay in counts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibratedSample {
    pub timestamp_ms: u32,
    pub dx: i16,
    pub dy: i16,
    pub squal: u8,
    /// g
    pub accel: Vec3,
    /// deg/s
    pub gyro: Vec3,
    /// gauss
    pub mag: Vec3,
}

fn scale3(raw: [i16; 3], k: f64) -> Vec3 {
    Vec3::new(raw[0] as f64 * k, raw[1] as f64 * k, raw[2] as f64 * k)
}

pub fn apply_scales(f: &SensorFrame, c: &ScaleConfig) -> CalibratedSample {
    CalibratedSample {
        timestamp_ms: f.timestamp_ms,
        dx: f.dx,
        dy: f.dy,
        squal: f.squal,
        accel: scale3(f.accel_raw, c.accel_g_per_lsb),
        gyro: scale3(f.gyro_raw, c.gyro_dps_per_lsb),
        mag: scale3(f.mag_raw, c.mag_gauss_per_lsb),
    }
}
