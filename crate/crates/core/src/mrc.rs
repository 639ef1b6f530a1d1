//! MRC/CCP4-2014 image files.
//!
//! The fixed header is 1024 bytes (256 four-byte words), optionally followed
//! by `nsymbt` bytes of extended header, then the voxel block in x-fastest
//! order. Byte order is taken from the machine stamp at bytes 212..216.
//! Files are always written little-endian.

use std::fs;
use std::path::Path;

use ndarray::{Array2, Array3, ArrayView2, Axis};
use thiserror::Error;

pub const HEADER_LEN: usize = 1024;
pub const MAP_ID: [u8; 4] = *b"MAP ";
pub const STAMP_LITTLE: [u8; 4] = [0x44, 0x44, 0x00, 0x00];
pub const STAMP_BIG: [u8; 4] = [0x11, 0x11, 0x00, 0x00];

#[derive(Debug, Error)]
pub enum MrcError {
    #[error("truncated file: expected {expected} bytes, found {actual}")]
    TruncatedFile { expected: usize, actual: usize },
    #[error("{extra} trailing bytes after the voxel block")]
    TrailingBytes { extra: usize },
    #[error("unsupported MRC mode {0}")]
    UnsupportedMode(i32),
    #[error("bad map id {0:?}, expected \"MAP \"")]
    BadMagic([u8; 4]),
    #[error("unrecognised machine stamp {0:02x?}")]
    BadMachineStamp([u8; 4]),
    #[error("invalid dimensions {nx}x{ny}x{nz}")]
    BadDimensions { nx: i32, ny: i32, nz: i32 },
    #[error("value {value} at index {index} not representable in mode {mode:?}")]
    ValueOutOfRange { value: f32, index: usize, mode: Mode },
    #[error("slice {z} out of range for nz={nz}")]
    IndexOutOfRange { z: usize, nz: usize },
    #[error(transparent)]
    IoFailure(#[from] std::io::Error),
}

/// Voxel storage modes supported for reading and writing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Int8,
    Int16,
    Float32,
    Uint16,
}

impl Mode {
    pub fn from_code(code: i32) -> Result<Self, MrcError> {
        match code {
            0 => Ok(Mode::Int8),
            1 => Ok(Mode::Int16),
            2 => Ok(Mode::Float32),
            6 => Ok(Mode::Uint16),
            other => Err(MrcError::UnsupportedMode(other)),
        }
    }

    pub fn code(self) -> i32 {
        match self {
            Mode::Int8 => 0,
            Mode::Int16 => 1,
            Mode::Float32 => 2,
            Mode::Uint16 => 6,
        }
    }

    pub fn bytes_per_voxel(self) -> usize {
        match self {
            Mode::Int8 => 1,
            Mode::Int16 | Mode::Uint16 => 2,
            Mode::Float32 => 4,
        }
    }

    /// Representable range for integer modes; `None` for float.
    pub fn int_range(self) -> Option<(f32, f32)> {
        match self {
            Mode::Int8 => Some((i8::MIN as f32, i8::MAX as f32)),
            Mode::Int16 => Some((i16::MIN as f32, i16::MAX as f32)),
            Mode::Uint16 => Some((0.0, u16::MAX as f32)),
            Mode::Float32 => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ByteOrder {
    Little,
    Big,
}

impl ByteOrder {
    fn from_stamp(stamp: [u8; 4]) -> Result<Self, MrcError> {
        match stamp[0] {
            0x44 => Ok(ByteOrder::Little),
            0x11 => Ok(ByteOrder::Big),
            _ => Err(MrcError::BadMachineStamp(stamp)),
        }
    }
}

/// Decoded 1024-byte header. Words not interpreted by this crate are kept
/// verbatim so that a read/write cycle preserves them.
#[derive(Debug, Clone, PartialEq)]
pub struct MrcHeader {
    pub nx: i32,
    pub ny: i32,
    pub nz: i32,
    pub mode: Mode,
    pub nxstart: i32,
    pub nystart: i32,
    pub nzstart: i32,
    pub mx: i32,
    pub my: i32,
    pub mz: i32,
    /// Cell dimensions in Å.
    pub cell_dims: [f32; 3],
    pub cell_angles: [f32; 3],
    pub axis_map: [i32; 3],
    pub dmin: f32,
    pub dmax: f32,
    pub dmean: f32,
    pub ispg: i32,
    pub nsymbt: i32,
    /// Words 25-26.
    pub extra_a: [u8; 8],
    pub exttyp: [u8; 4],
    pub nversion: i32,
    /// Words 29-49.
    pub extra_b: [u8; 84],
    pub origin: [f32; 3],
    pub map_id: [u8; 4],
    pub machine_stamp: [u8; 4],
    pub rms: f32,
    pub nlabl: i32,
    pub labels: [[u8; 80]; 10],
}

impl MrcHeader {
    /// Header for a fresh `nx`×`ny`×`nz` image at 1 Å/pixel.
    pub fn new(nx: usize, ny: usize, nz: usize, mode: Mode) -> Self {
        MrcHeader {
            nx: nx as i32,
            ny: ny as i32,
            nz: nz as i32,
            mode,
            nxstart: 0,
            nystart: 0,
            nzstart: 0,
            mx: nx as i32,
            my: ny as i32,
            mz: nz as i32,
            cell_dims: [nx as f32, ny as f32, nz as f32],
            cell_angles: [90.0; 3],
            axis_map: [1, 2, 3],
            dmin: 0.0,
            dmax: 0.0,
            dmean: 0.0,
            ispg: 0,
            nsymbt: 0,
            extra_a: [0; 8],
            exttyp: [0; 4],
            nversion: 20140,
            extra_b: [0; 84],
            origin: [0.0; 3],
            map_id: MAP_ID,
            machine_stamp: STAMP_LITTLE,
            rms: 0.0,
            nlabl: 0,
            labels: [[b' '; 80]; 10],
        }
    }

    pub fn voxel_count(&self) -> usize {
        self.nx as usize * self.ny as usize * self.nz as usize
    }

    /// Total file length implied by the header.
    pub fn file_len(&self) -> usize {
        HEADER_LEN + self.nsymbt.max(0) as usize + self.voxel_count() * self.mode.bytes_per_voxel()
    }

    fn decode(raw: &[u8]) -> Result<(Self, ByteOrder), MrcError> {
        let map_id: [u8; 4] = raw[208..212].try_into().unwrap();
        if map_id != MAP_ID {
            return Err(MrcError::BadMagic(map_id));
        }
        let machine_stamp: [u8; 4] = raw[212..216].try_into().unwrap();
        let order = ByteOrder::from_stamp(machine_stamp)?;

        let word = |i: usize| -> [u8; 4] { raw[4 * i..4 * i + 4].try_into().unwrap() };
        let int = |i: usize| match order {
            ByteOrder::Little => i32::from_le_bytes(word(i)),
            ByteOrder::Big => i32::from_be_bytes(word(i)),
        };
        let real = |i: usize| match order {
            ByteOrder::Little => f32::from_le_bytes(word(i)),
            ByteOrder::Big => f32::from_be_bytes(word(i)),
        };

        let mode = Mode::from_code(int(3))?;
        let (nx, ny, nz) = (int(0), int(1), int(2));
        if nx <= 0 || ny <= 0 || nz <= 0 {
            return Err(MrcError::BadDimensions { nx, ny, nz });
        }
        let nsymbt = int(23);
        if nsymbt < 0 {
            return Err(MrcError::TruncatedFile { expected: HEADER_LEN, actual: raw.len() });
        }

        let mut labels = [[0u8; 80]; 10];
        for (k, label) in labels.iter_mut().enumerate() {
            label.copy_from_slice(&raw[224 + 80 * k..224 + 80 * (k + 1)]);
        }

        let header = MrcHeader {
            nx,
            ny,
            nz,
            mode,
            nxstart: int(4),
            nystart: int(5),
            nzstart: int(6),
            mx: int(7),
            my: int(8),
            mz: int(9),
            cell_dims: [real(10), real(11), real(12)],
            cell_angles: [real(13), real(14), real(15)],
            axis_map: [int(16), int(17), int(18)],
            dmin: real(19),
            dmax: real(20),
            dmean: real(21),
            ispg: int(22),
            nsymbt,
            extra_a: raw[96..104].try_into().unwrap(),
            exttyp: word(26),
            nversion: int(27),
            extra_b: raw[112..196].try_into().unwrap(),
            origin: [real(49), real(50), real(51)],
            map_id,
            machine_stamp,
            rms: real(54),
            nlabl: int(55),
            labels,
        };
        Ok((header, order))
    }

    fn encode(&self) -> [u8; HEADER_LEN] {
        let mut out = [0u8; HEADER_LEN];
        let mut put = |i: usize, bytes: [u8; 4]| out[4 * i..4 * i + 4].copy_from_slice(&bytes);
        let ints = [
            (0, self.nx),
            (1, self.ny),
            (2, self.nz),
            (3, self.mode.code()),
            (4, self.nxstart),
            (5, self.nystart),
            (6, self.nzstart),
            (7, self.mx),
            (8, self.my),
            (9, self.mz),
            (16, self.axis_map[0]),
            (17, self.axis_map[1]),
            (18, self.axis_map[2]),
            (22, self.ispg),
            (23, self.nsymbt),
            (27, self.nversion),
            (55, self.nlabl),
        ];
        for (i, v) in ints {
            put(i, v.to_le_bytes());
        }
        let reals = [
            (10, self.cell_dims[0]),
            (11, self.cell_dims[1]),
            (12, self.cell_dims[2]),
            (13, self.cell_angles[0]),
            (14, self.cell_angles[1]),
            (15, self.cell_angles[2]),
            (19, self.dmin),
            (20, self.dmax),
            (21, self.dmean),
            (49, self.origin[0]),
            (50, self.origin[1]),
            (51, self.origin[2]),
            (54, self.rms),
        ];
        for (i, v) in reals {
            put(i, v.to_le_bytes());
        }
        put(26, self.exttyp);
        put(52, MAP_ID);
        // Stamps of either little-endian flavour are kept as found.
        let stamp = if self.machine_stamp[0] == 0x44 { self.machine_stamp } else { STAMP_LITTLE };
        put(53, stamp);
        out[96..104].copy_from_slice(&self.extra_a);
        out[112..196].copy_from_slice(&self.extra_b);
        for (k, label) in self.labels.iter().enumerate() {
            out[224 + 80 * k..224 + 80 * (k + 1)].copy_from_slice(label);
        }
        out
    }
}

/// Header plus voxels, shaped `[nz, ny, nx]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MrcVolume {
    pub header: MrcHeader,
    pub extended_header: Vec<u8>,
    pub data: Array3<f32>,
}

impl MrcVolume {
    /// Wraps `data` (`[nz, ny, nx]`) with a default header for `mode`.
    pub fn new(data: Array3<f32>, mode: Mode) -> Self {
        let (nz, ny, nx) = data.dim();
        let mut header = MrcHeader::new(nx, ny, nz, mode);
        let stats = Stats::of(data.iter().copied());
        stats.apply(&mut header);
        MrcVolume { header, extended_header: Vec::new(), data }
    }

    pub fn from_plane(plane: ArrayView2<f32>, mode: Mode) -> Self {
        Self::new(plane.to_owned().insert_axis(Axis(0)), mode)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, MrcError> {
        if bytes.len() < HEADER_LEN {
            return Err(MrcError::TruncatedFile { expected: HEADER_LEN, actual: bytes.len() });
        }
        let (header, order) = MrcHeader::decode(&bytes[..HEADER_LEN])?;
        let expected = header.file_len();
        if bytes.len() < expected {
            return Err(MrcError::TruncatedFile { expected, actual: bytes.len() });
        }
        if bytes.len() > expected {
            return Err(MrcError::TrailingBytes { extra: bytes.len() - expected });
        }

        let ext_end = HEADER_LEN + header.nsymbt as usize;
        let extended_header = bytes[HEADER_LEN..ext_end].to_vec();
        let block = &bytes[ext_end..];
        let values: Vec<f32> = match (header.mode, order) {
            (Mode::Int8, _) => block.iter().map(|&b| b as i8 as f32).collect(),
            (Mode::Int16, ByteOrder::Little) => {
                block.chunks_exact(2).map(|c| i16::from_le_bytes([c[0], c[1]]) as f32).collect()
            }
            (Mode::Int16, ByteOrder::Big) => {
                block.chunks_exact(2).map(|c| i16::from_be_bytes([c[0], c[1]]) as f32).collect()
            }
            (Mode::Uint16, ByteOrder::Little) => {
                block.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]]) as f32).collect()
            }
            (Mode::Uint16, ByteOrder::Big) => {
                block.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]]) as f32).collect()
            }
            (Mode::Float32, ByteOrder::Little) => block
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect(),
            (Mode::Float32, ByteOrder::Big) => block
                .chunks_exact(4)
                .map(|c| f32::from_be_bytes([c[0], c[1], c[2], c[3]]))
                .collect(),
        };
        let shape = (header.nz as usize, header.ny as usize, header.nx as usize);
        let data = Array3::from_shape_vec(shape, values).expect("length checked against header");
        Ok(MrcVolume { header, extended_header, data })
    }

    /// Encodes the volume little-endian in `mode`. Header statistics are
    /// recomputed from the stored (quantized) values.
    pub fn to_bytes(&self, mode: Mode) -> Result<Vec<u8>, MrcError> {
        let (nz, ny, nx) = self.data.dim();
        let mut header = self.header.clone();
        header.nx = nx as i32;
        header.ny = ny as i32;
        header.nz = nz as i32;
        header.mode = mode;
        header.nsymbt = self.extended_header.len() as i32;

        let mut block = Vec::with_capacity(self.data.len() * mode.bytes_per_voxel());
        let mut stored = Vec::with_capacity(self.data.len());
        for (index, &value) in self.data.iter().enumerate() {
            let q = quantize(value, mode).ok_or(MrcError::ValueOutOfRange { value, index, mode })?;
            match mode {
                Mode::Int8 => block.push(q as i8 as u8),
                Mode::Int16 => block.extend_from_slice(&(q as i16).to_le_bytes()),
                Mode::Uint16 => block.extend_from_slice(&(q as u16).to_le_bytes()),
                Mode::Float32 => block.extend_from_slice(&q.to_le_bytes()),
            }
            stored.push(q);
        }
        Stats::of(stored.into_iter()).apply(&mut header);

        let mut out = Vec::with_capacity(header.file_len());
        out.extend_from_slice(&header.encode());
        out.extend_from_slice(&self.extended_header);
        out.extend_from_slice(&block);
        Ok(out)
    }

    /// Normalized copy of plane `z`.
    pub fn tile_slice(&self, z: usize) -> Result<Array2<f32>, MrcError> {
        let nz = self.data.dim().0;
        if z >= nz {
            return Err(MrcError::IndexOutOfRange { z, nz });
        }
        Ok(normalize_min_max(self.data.index_axis(Axis(0), z)))
    }

    /// Plane `z` as stored, without normalization.
    pub fn plane(&self, z: usize) -> Result<ArrayView2<'_, f32>, MrcError> {
        let nz = self.data.dim().0;
        if z >= nz {
            return Err(MrcError::IndexOutOfRange { z, nz });
        }
        Ok(self.data.index_axis(Axis(0), z))
    }
}

fn quantize(value: f32, mode: Mode) -> Option<f32> {
    match mode.int_range() {
        None => Some(value),
        Some((lo, hi)) => {
            let r = value.round();
            (r >= lo && r <= hi).then_some(r)
        }
    }
}

struct Stats {
    min: f32,
    max: f32,
    mean: f32,
    rms: f32,
}

impl Stats {
    fn of(values: impl Iterator<Item = f32>) -> Self {
        let (mut min, mut max) = (f32::INFINITY, f32::NEG_INFINITY);
        let (mut sum, mut sum_sq, mut n) = (0.0f64, 0.0f64, 0usize);
        for v in values {
            min = min.min(v);
            max = max.max(v);
            sum += v as f64;
            sum_sq += (v as f64) * (v as f64);
            n += 1;
        }
        if n == 0 {
            return Stats { min: 0.0, max: 0.0, mean: 0.0, rms: 0.0 };
        }
        let mean = sum / n as f64;
        let var = (sum_sq / n as f64 - mean * mean).max(0.0);
        Stats { min, max, mean: mean as f32, rms: var.sqrt() as f32 }
    }

    fn apply(&self, header: &mut MrcHeader) {
        header.dmin = self.min;
        header.dmax = self.max;
        header.dmean = self.mean;
        header.rms = self.rms;
    }
}

/// Linear map of `plane` onto [0,1]; constant planes become all zeros.
pub fn normalize_min_max(plane: ArrayView2<f32>) -> Array2<f32> {
    let (lo, hi) = plane
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    if !(span > 0.0) || !span.is_finite() {
        return Array2::zeros(plane.raw_dim());
    }
    plane.mapv(|v| ((v - lo) / span).clamp(0.0, 1.0))
}

pub fn read_mrc(path: impl AsRef<Path>) -> Result<MrcVolume, MrcError> {
    MrcVolume::from_bytes(&fs::read(path)?)
}

pub fn write_mrc(vol: &MrcVolume, path: impl AsRef<Path>, mode: Mode) -> Result<(), MrcError> {
    let bytes = vol.to_bytes(mode)?;
    fs::write(path, bytes)?;
    Ok(())
}
