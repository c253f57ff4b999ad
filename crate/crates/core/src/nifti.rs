//! NIfTI-1 reading and writing.
//!
//! Single-file (`n+1`) and paired (`ni1`, `.hdr` + `.img`) layouts are read,
//! each optionally gzip-compressed (detected from the `1F 8B` magic, not the
//! file name). Either byte order is accepted on input; output is always
//! little-endian float32 in a single `.nii` or `.nii.gz` file.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{BigEndian, ByteOrder, LittleEndian};
use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use crate::error::{Error, Result};
use crate::volume::{voxel_count, Affine, IntensityUnit, Shape3, Volume3D, IDENTITY_AFFINE};

pub const HEADER_SIZE: usize = 348;
/// Header plus the 4-byte extension flag block.
pub const SINGLE_FILE_OFFSET: usize = 352;
pub const MAGIC_SINGLE: [u8; 4] = *b"n+1\0";
pub const MAGIC_PAIRED: [u8; 4] = *b"ni1\0";

pub const DT_UINT8: i16 = 2;
pub const DT_INT16: i16 = 4;
pub const DT_INT32: i16 = 8;
pub const DT_FLOAT32: i16 = 16;
pub const DT_FLOAT64: i16 = 64;
pub const DT_UINT16: i16 = 512;

/// Bytes per voxel for the datatypes this reader converts.
pub fn datatype_size(code: i16) -> Option<usize> {
    match code {
        DT_UINT8 => Some(1),
        DT_INT16 | DT_UINT16 => Some(2),
        DT_INT32 | DT_FLOAT32 => Some(4),
        DT_FLOAT64 => Some(8),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endian {
    Little,
    Big,
}

/// The subset of the 348-byte NIfTI-1 header this crate interprets.
/// Fields not listed here are written as zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct NiftiHeader {
    pub sizeof_hdr: i32,
    pub dim_info: u8,
    pub dim: [i16; 8],
    pub intent_code: i16,
    pub datatype: i16,
    pub bitpix: i16,
    pub pixdim: [f32; 8],
    pub vox_offset: f32,
    pub scl_slope: f32,
    pub scl_inter: f32,
    pub xyzt_units: u8,
    pub cal_max: f32,
    pub cal_min: f32,
    pub descrip: [u8; 80],
    pub qform_code: i16,
    pub sform_code: i16,
    pub quatern: [f32; 3],
    pub qoffset: [f32; 3],
    pub srow: [[f32; 4]; 3],
    pub magic: [u8; 4],
    pub endian: Endian,
}

impl Default for NiftiHeader {
    fn default() -> Self {
        NiftiHeader {
            sizeof_hdr: HEADER_SIZE as i32,
            dim_info: 0,
            dim: [3, 1, 1, 1, 1, 1, 1, 1],
            intent_code: 0,
            datatype: DT_FLOAT32,
            bitpix: 32,
            pixdim: [1.0; 8],
            vox_offset: SINGLE_FILE_OFFSET as f32,
            scl_slope: 1.0,
            scl_inter: 0.0,
            xyzt_units: 0,
            cal_max: 0.0,
            cal_min: 0.0,
            descrip: [0; 80],
            qform_code: 0,
            sform_code: 0,
            quatern: [0.0; 3],
            qoffset: [0.0; 3],
            srow: [
                [1.0, 0.0, 0.0, 0.0],
                [0.0, 1.0, 0.0, 0.0],
                [0.0, 0.0, 1.0, 0.0],
            ],
            magic: MAGIC_SINGLE,
            endian: Endian::Little,
        }
    }
}

impl NiftiHeader {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_SIZE {
            return Err(Error::Parse(format!(
                "{} bytes is shorter than the {HEADER_SIZE}-byte header",
                bytes.len()
            )));
        }
        let endian = if LittleEndian::read_i32(&bytes[0..4]) == HEADER_SIZE as i32 {
            Endian::Little
        } else if BigEndian::read_i32(&bytes[0..4]) == HEADER_SIZE as i32 {
            Endian::Big
        } else {
            return Err(Error::Parse(format!(
                "sizeof_hdr is {} (must be {HEADER_SIZE})",
                LittleEndian::read_i32(&bytes[0..4])
            )));
        };
        let hdr = match endian {
            Endian::Little => Self::decode::<LittleEndian>(bytes, endian),
            Endian::Big => Self::decode::<BigEndian>(bytes, endian),
        };
        if hdr.magic != MAGIC_SINGLE && hdr.magic != MAGIC_PAIRED {
            return Err(Error::Parse(format!("bad magic {:?}", hdr.magic)));
        }
        Ok(hdr)
    }

    fn decode<B: ByteOrder>(b: &[u8], endian: Endian) -> Self {
        let f32_at = |o: usize| B::read_f32(&b[o..o + 4]);
        let i16_at = |o: usize| B::read_i16(&b[o..o + 2]);
        let mut dim = [0i16; 8];
        let mut pixdim = [0f32; 8];
        for i in 0..8 {
            dim[i] = i16_at(40 + 2 * i);
            pixdim[i] = f32_at(76 + 4 * i);
        }
        let mut srow = [[0f32; 4]; 3];
        for (r, row) in srow.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = f32_at(280 + 16 * r + 4 * c);
            }
        }
        let mut descrip = [0u8; 80];
        descrip.copy_from_slice(&b[148..228]);
        let mut magic = [0u8; 4];
        magic.copy_from_slice(&b[344..348]);
        NiftiHeader {
            sizeof_hdr: B::read_i32(&b[0..4]),
            dim_info: b[39],
            dim,
            intent_code: i16_at(68),
            datatype: i16_at(70),
            bitpix: i16_at(72),
            pixdim,
            vox_offset: f32_at(108),
            scl_slope: f32_at(112),
            scl_inter: f32_at(116),
            xyzt_units: b[123],
            cal_max: f32_at(124),
            cal_min: f32_at(128),
            descrip,
            qform_code: i16_at(252),
            sform_code: i16_at(254),
            quatern: [f32_at(256), f32_at(260), f32_at(264)],
            qoffset: [f32_at(268), f32_at(272), f32_at(276)],
            srow,
            magic,
            endian,
        }
    }

    /// Little-endian 348-byte encoding (the `endian` field is ignored).
    pub fn to_bytes(&self) -> [u8; HEADER_SIZE] {
        type B = LittleEndian;
        let mut b = [0u8; HEADER_SIZE];
        B::write_i32(&mut b[0..4], self.sizeof_hdr);
        b[38] = b'r';
        b[39] = self.dim_info;
        for i in 0..8 {
            B::write_i16(&mut b[40 + 2 * i..42 + 2 * i], self.dim[i]);
            B::write_f32(&mut b[76 + 4 * i..80 + 4 * i], self.pixdim[i]);
        }
        B::write_i16(&mut b[68..70], self.intent_code);
        B::write_i16(&mut b[70..72], self.datatype);
        B::write_i16(&mut b[72..74], self.bitpix);
        B::write_f32(&mut b[108..112], self.vox_offset);
        B::write_f32(&mut b[112..116], self.scl_slope);
        B::write_f32(&mut b[116..120], self.scl_inter);
        b[123] = self.xyzt_units;
        B::write_f32(&mut b[124..128], self.cal_max);
        B::write_f32(&mut b[128..132], self.cal_min);
        b[148..228].copy_from_slice(&self.descrip);
        B::write_i16(&mut b[252..254], self.qform_code);
        B::write_i16(&mut b[254..256], self.sform_code);
        for i in 0..3 {
            B::write_f32(&mut b[256 + 4 * i..260 + 4 * i], self.quatern[i]);
            B::write_f32(&mut b[268 + 4 * i..272 + 4 * i], self.qoffset[i]);
        }
        for (r, row) in self.srow.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                let o = 280 + 16 * r + 4 * c;
                B::write_f32(&mut b[o..o + 4], *v);
            }
        }
        b[344..348].copy_from_slice(&self.magic);
        b
    }

    /// Spatial extent, folding trailing singleton dims.
    pub fn shape(&self) -> Result<Shape3> {
        let rank = self.dim[0];
        if !(1..=7).contains(&rank) {
            return Err(Error::Parse(format!("dim[0] = {rank} outside [1, 7]")));
        }
        if rank < 3 {
            return Err(Error::Dimension(format!("dim[0] = {rank}, need 3 spatial dims")));
        }
        let rank = rank as usize;
        if let Some(i) = (1..=rank).find(|&i| self.dim[i] <= 0) {
            return Err(Error::Parse(format!("dim[{i}] = {} must be positive", self.dim[i])));
        }
        if let Some(i) = (4..=rank).find(|&i| self.dim[i] != 1) {
            return Err(Error::Dimension(format!(
                "dim[{i}] = {} (only trailing singleton dims are accepted)",
                self.dim[i]
            )));
        }
        Ok([self.dim[1] as usize, self.dim[2] as usize, self.dim[3] as usize])
    }

    pub fn spacing(&self) -> [f64; 3] {
        let mut s = [1.0; 3];
        for (i, v) in s.iter_mut().enumerate() {
            let p = self.pixdim[i + 1].abs() as f64;
            if p > 0.0 && p.is_finite() {
                *v = p;
            }
        }
        s
    }

    /// Effective `(slope, intercept)`: a zero or non-finite slope means identity.
    pub fn scaling(&self) -> (f64, f64) {
        let slope = self.scl_slope as f64;
        if slope == 0.0 || !slope.is_finite() {
            (1.0, 0.0)
        } else {
            let inter = self.scl_inter as f64;
            (slope, if inter.is_finite() { inter } else { 0.0 })
        }
    }

    /// Voxel-to-world matrix: sform if set, else qform, else scaled identity.
    pub fn affine(&self) -> Affine {
        if self.sform_code > 0 {
            let mut a = IDENTITY_AFFINE;
            for r in 0..3 {
                for c in 0..4 {
                    a[r][c] = self.srow[r][c] as f64;
                }
            }
            return a;
        }
        let [dx, dy, dz] = self.spacing();
        if self.qform_code > 0 {
            let [b, c, d] = self.quatern.map(|q| q as f64);
            let a = (1.0 - (b * b + c * c + d * d)).max(0.0).sqrt();
            let qfac = if self.pixdim[0] < 0.0 { -1.0 } else { 1.0 };
            let r = [
                [a * a + b * b - c * c - d * d, 2.0 * (b * c - a * d), 2.0 * (b * d + a * c)],
                [2.0 * (b * c + a * d), a * a + c * c - b * b - d * d, 2.0 * (c * d - a * b)],
                [2.0 * (b * d - a * c), 2.0 * (c * d + a * b), a * a + d * d - c * c - b * b],
            ];
            let scale = [dx, dy, dz * qfac];
            let mut m = IDENTITY_AFFINE;
            for row in 0..3 {
                for col in 0..3 {
                    m[row][col] = r[row][col] * scale[col];
                }
                m[row][3] = self.qoffset[row] as f64;
            }
            return m;
        }
        let mut m = IDENTITY_AFFINE;
        m[0][0] = dx;
        m[1][1] = dy;
        m[2][2] = dz;
        m
    }

    /// Header describing `v` as a single-file float32 NIfTI.
    pub fn for_volume(v: &Volume3D) -> Result<Self> {
        let shape = v.shape();
        let mut dim = [3i16, 1, 1, 1, 1, 1, 1, 1];
        for i in 0..3 {
            dim[i + 1] = i16::try_from(shape[i]).map_err(|_| {
                Error::Dimension(format!("extent {} does not fit a NIfTI-1 dim", shape[i]))
            })?;
        }
        let mut pixdim = [1.0f32; 8];
        for i in 0..3 {
            pixdim[i + 1] = v.spacing()[i] as f32;
        }
        let a = v.affine();
        let mut srow = [[0f32; 4]; 3];
        for r in 0..3 {
            for c in 0..4 {
                srow[r][c] = a[r][c] as f32;
            }
        }
        Ok(NiftiHeader {
            dim,
            pixdim,
            // millimetres
            xyzt_units: 2,
            sform_code: 1,
            srow,
            ..NiftiHeader::default()
        })
    }
}

/// Decode a complete single-file NIfTI image held in memory (gzip allowed).
pub fn decode_nifti(bytes: &[u8]) -> Result<Volume3D> {
    let raw = maybe_gunzip(bytes, Path::new("<memory>"))?;
    let header = NiftiHeader::from_bytes(&raw)?;
    if header.magic != MAGIC_SINGLE {
        return Err(Error::Parse("paired-file header without its image file".into()));
    }
    let offset = payload_offset(&header)?;
    volume_from_payload(&header, &raw, offset)
}

pub fn read_nifti(path: impl AsRef<Path>) -> Result<Volume3D> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let raw = maybe_gunzip(&bytes, path)?;
    let header = NiftiHeader::from_bytes(&raw)?;
    if header.magic == MAGIC_SINGLE {
        let offset = payload_offset(&header)?;
        return volume_from_payload(&header, &raw, offset);
    }
    let img_path = paired_image_path(path)?;
    let img_bytes = fs::read(&img_path).map_err(|e| Error::io(&img_path, e))?;
    let img = maybe_gunzip(&img_bytes, &img_path)?;
    let offset = header.vox_offset.max(0.0) as usize;
    volume_from_payload(&header, &img, offset)
}

/// Read only the header of a NIfTI file.
pub fn read_header(path: impl AsRef<Path>) -> Result<NiftiHeader> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    NiftiHeader::from_bytes(&maybe_gunzip(&bytes, path)?)
}

/// Encode `v` as an uncompressed single-file NIfTI-1 image.
pub fn encode_nifti(v: &Volume3D) -> Result<Vec<u8>> {
    let header = NiftiHeader::for_volume(v)?;
    let mut out = Vec::with_capacity(SINGLE_FILE_OFFSET + 4 * v.len());
    out.extend_from_slice(&header.to_bytes());
    // no extensions
    out.extend_from_slice(&[0u8; 4]);
    let mut payload = vec![0u8; 4 * v.len()];
    LittleEndian::write_f32_into(v.voxels(), &mut payload);
    out.extend_from_slice(&payload);
    Ok(out)
}

pub fn write_nifti(v: &Volume3D, path: impl AsRef<Path>, gzip: bool) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_nifti(v)?;
    let bytes = if gzip {
        let mut enc = GzEncoder::new(Vec::new(), Compression::default());
        enc.write_all(&bytes).map_err(|e| Error::io(path, e))?;
        enc.finish().map_err(|e| Error::io(path, e))?
    } else {
        bytes
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn maybe_gunzip(bytes: &[u8], path: &Path) -> Result<Vec<u8>> {
    if bytes.len() >= 2 && bytes[0] == 0x1F && bytes[1] == 0x8B {
        let mut out = Vec::new();
        MultiGzDecoder::new(bytes)
            .read_to_end(&mut out)
            .map_err(|e| Error::Parse(format!("gzip stream in {}: {e}", path.display())))?;
        Ok(out)
    } else {
        Ok(bytes.to_vec())
    }
}

fn payload_offset(header: &NiftiHeader) -> Result<usize> {
    let off = header.vox_offset;
    if !off.is_finite() || off < SINGLE_FILE_OFFSET as f32 {
        return Err(Error::Parse(format!(
            "vox_offset {off} is below {SINGLE_FILE_OFFSET} for a single-file image"
        )));
    }
    Ok(off as usize)
}

fn paired_image_path(hdr: &Path) -> Result<PathBuf> {
    let name = hdr
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::Parse(format!("cannot derive image path from {}", hdr.display())))?;
    let candidates: Vec<String> = if let Some(stem) = name.strip_suffix(".hdr.gz") {
        vec![format!("{stem}.img.gz"), format!("{stem}.img")]
    } else if let Some(stem) = name.strip_suffix(".hdr") {
        vec![format!("{stem}.img"), format!("{stem}.img.gz")]
    } else {
        return Err(Error::Parse(format!(
            "paired header {} must end in .hdr or .hdr.gz",
            hdr.display()
        )));
    };
    candidates
        .into_iter()
        .map(|c| hdr.with_file_name(c))
        .find(|p| p.exists())
        .ok_or_else(|| Error::Parse(format!("no image file next to {}", hdr.display())))
}

fn volume_from_payload(header: &NiftiHeader, raw: &[u8], offset: usize) -> Result<Volume3D> {
    let shape = header.shape()?;
    let size =
        datatype_size(header.datatype).ok_or(Error::UnsupportedDatatype(header.datatype))?;
    if header.bitpix as usize != 8 * size {
        return Err(Error::Parse(format!(
            "bitpix {} does not match datatype {}",
            header.bitpix, header.datatype
        )));
    }
    let count = voxel_count(shape);
    let needed = count
        .checked_mul(size)
        .and_then(|n| n.checked_add(offset))
        .ok_or_else(|| Error::Parse("payload size overflows".into()))?;
    if raw.len() < needed {
        return Err(Error::Parse(format!(
            "payload truncated: {} bytes available, {needed} required",
            raw.len()
        )));
    }
    let data = &raw[offset..needed];
    let stored = match header.endian {
        Endian::Little => decode_stored::<LittleEndian>(header.datatype, data, count),
        Endian::Big => decode_stored::<BigEndian>(header.datatype, data, count),
    };
    let (slope, inter) = header.scaling();
    let voxels: Vec<f32> = if slope == 1.0 && inter == 0.0 {
        stored.into_iter().map(|s| s as f32).collect()
    } else {
        stored.into_iter().map(|s| (slope * s + inter) as f32).collect()
    };
    Volume3D::new(
        shape,
        voxels,
        header.spacing(),
        header.affine(),
        IntensityUnit::RawHU,
    )
}

fn decode_stored<B: ByteOrder>(datatype: i16, data: &[u8], count: usize) -> Vec<f64> {
    match datatype {
        DT_UINT8 => data.iter().map(|&b| b as f64).collect(),
        DT_INT16 => data.chunks_exact(2).map(|c| B::read_i16(c) as f64).collect(),
        DT_UINT16 => data.chunks_exact(2).map(|c| B::read_u16(c) as f64).collect(),
        DT_INT32 => data.chunks_exact(4).map(|c| B::read_i32(c) as f64).collect(),
        DT_FLOAT32 => {
            let mut v = vec![0f32; count];
            B::read_f32_into(data, &mut v);
            v.into_iter().map(|x| x as f64).collect()
        }
        DT_FLOAT64 => data.chunks_exact(8).map(B::read_f64).collect(),
        _ => unreachable!("datatype checked by caller"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header_bytes(mutate: impl FnOnce(&mut NiftiHeader)) -> Vec<u8> {
        let mut h = NiftiHeader {
            dim: [3, 2, 2, 2, 1, 1, 1, 1],
            ..NiftiHeader::default()
        };
        mutate(&mut h);
        let mut out = h.to_bytes().to_vec();
        out.extend_from_slice(&[0u8; 4]);
        out
    }

    fn with_payload<T: Copy>(mut bytes: Vec<u8>, vals: &[T], put: fn(&mut [u8], T), width: usize) -> Vec<u8> {
        for &v in vals {
            let mut buf = vec![0u8; width];
            put(&mut buf, v);
            bytes.extend_from_slice(&buf);
        }
        bytes
    }

    #[test]
    fn header_round_trips_through_bytes() {
        let h = NiftiHeader {
            dim: [3, 4, 5, 6, 1, 1, 1, 1],
            pixdim: [1.0, 0.8, 0.8, 2.5, 0.0, 0.0, 0.0, 0.0],
            scl_slope: 2.0,
            scl_inter: -1024.0,
            qform_code: 1,
            quatern: [0.0, 0.0, 1.0],
            ..NiftiHeader::default()
        };
        let parsed = NiftiHeader::from_bytes(&h.to_bytes()).unwrap();
        assert_eq!(parsed, h);
    }

    #[test]
    fn rejects_bad_sizeof_hdr() {
        let bytes = header_bytes(|h| h.sizeof_hdr = 123);
        assert!(matches!(NiftiHeader::from_bytes(&bytes), Err(Error::Parse(_))));
    }

    #[test]
    fn rejects_bad_magic() {
        let bytes = header_bytes(|h| h.magic = *b"n+2\0");
        assert!(matches!(decode_nifti(&bytes), Err(Error::Parse(_))));
    }

    #[test]
    fn rejects_short_header() {
        assert!(matches!(decode_nifti(&[0u8; 100]), Err(Error::Parse(_))));
    }

    #[test]
    fn rejects_truncated_payload() {
        let bytes = with_payload(header_bytes(|_| {}), &[0f32; 7], LittleEndian::write_f32, 4);
        assert!(matches!(decode_nifti(&bytes), Err(Error::Parse(_))));
    }

    #[test]
    fn rejects_unsupported_datatype() {
        // complex64
        let bytes = header_bytes(|h| {
            h.datatype = 32;
            h.bitpix = 64;
        });
        assert!(matches!(decode_nifti(&bytes), Err(Error::UnsupportedDatatype(32))));
    }

    #[test]
    fn dimension_rules() {
        let four_d = header_bytes(|h| h.dim = [4, 2, 2, 2, 3, 1, 1, 1]);
        assert!(matches!(decode_nifti(&four_d), Err(Error::Dimension(_))));
        let two_d = header_bytes(|h| h.dim = [2, 2, 2, 1, 1, 1, 1, 1]);
        assert!(matches!(decode_nifti(&two_d), Err(Error::Dimension(_))));
        let bad_rank = header_bytes(|h| h.dim = [9, 2, 2, 2, 1, 1, 1, 1]);
        assert!(matches!(decode_nifti(&bad_rank), Err(Error::Parse(_))));

        let singleton = header_bytes(|h| h.dim = [5, 2, 2, 2, 1, 1, 1, 1]);
        let singleton = with_payload(singleton, &[1f32; 8], LittleEndian::write_f32, 4);
        assert_eq!(decode_nifti(&singleton).unwrap().shape(), [2, 2, 2]);
    }

    #[test]
    fn applies_scaling_to_int16() {
        let bytes = header_bytes(|h| {
            h.datatype = DT_INT16;
            h.bitpix = 16;
            h.scl_slope = 2.0;
            h.scl_inter = -1024.0;
        });
        let bytes = with_payload(bytes, &[0i16, 1, 2, 3, 500, 512, -1, 1000], LittleEndian::write_i16, 2);
        let v = decode_nifti(&bytes).unwrap();
        assert_eq!(v.unit(), IntensityUnit::RawHU);
        assert_eq!(v.voxels(), &[-1024.0, -1022.0, -1020.0, -1018.0, -24.0, 0.0, -1026.0, 976.0]);
    }

    #[test]
    fn zero_slope_means_identity() {
        let bytes = header_bytes(|h| {
            h.datatype = DT_UINT8;
            h.bitpix = 8;
            h.scl_slope = 0.0;
            h.scl_inter = 100.0;
        });
        let bytes = with_payload(bytes, &[0u8, 1, 2, 3, 4, 5, 6, 255], |b, v| b[0] = v, 1);
        let v = decode_nifti(&bytes).unwrap();
        assert_eq!(v.voxels(), &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 255.0]);
    }

    #[test]
    fn reads_every_supported_datatype() {
        let vals = [0.0f64, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0];
        let cases: Vec<(i16, Vec<u8>)> = vec![
            (DT_UINT8, vals.iter().map(|&v| v as u8).collect()),
            (DT_INT16, vals.iter().flat_map(|&v| (v as i16).to_le_bytes()).collect()),
            (DT_UINT16, vals.iter().flat_map(|&v| (v as u16).to_le_bytes()).collect()),
            (DT_INT32, vals.iter().flat_map(|&v| (v as i32).to_le_bytes()).collect()),
            (DT_FLOAT32, vals.iter().flat_map(|&v| (v as f32).to_le_bytes()).collect()),
            (DT_FLOAT64, vals.iter().flat_map(|&v| v.to_le_bytes()).collect()),
        ];
        for (code, payload) in cases {
            let mut bytes = header_bytes(|h| {
                h.datatype = code;
                h.bitpix = 8 * datatype_size(code).unwrap() as i16;
            });
            bytes.extend_from_slice(&payload);
            let v = decode_nifti(&bytes).unwrap();
            let got: Vec<f64> = v.voxels().iter().map(|&x| x as f64).collect();
            assert_eq!(got, vals, "datatype {code}");
        }
    }

    #[test]
    fn reads_big_endian() {
        let h = NiftiHeader {
            dim: [3, 2, 2, 2, 1, 1, 1, 1],
            datatype: DT_INT16,
            bitpix: 16,
            ..NiftiHeader::default()
        };
        // Re-encode the little-endian header field by field as big-endian.
        let le = h.to_bytes();
        let mut be = le;
        BigEndian::write_i32(&mut be[0..4], 348);
        for i in 0..8 {
            BigEndian::write_i16(&mut be[40 + 2 * i..42 + 2 * i], h.dim[i]);
            BigEndian::write_f32(&mut be[76 + 4 * i..80 + 4 * i], h.pixdim[i]);
        }
        BigEndian::write_i16(&mut be[70..72], h.datatype);
        BigEndian::write_i16(&mut be[72..74], h.bitpix);
        BigEndian::write_f32(&mut be[108..112], h.vox_offset);
        BigEndian::write_f32(&mut be[112..116], h.scl_slope);
        let mut bytes = be.to_vec();
        bytes.extend_from_slice(&[0u8; 4]);
        for v in [-3i16, -2, -1, 0, 1, 2, 3, 1000] {
            bytes.extend_from_slice(&v.to_be_bytes());
        }
        let v = decode_nifti(&bytes).unwrap();
        assert_eq!(v.voxels(), &[-3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0, 1000.0]);
    }

    #[test]
    fn zero_volume_layout() {
        let v = Volume3D::filled([4, 4, 4], 0.0, IntensityUnit::RawHU).unwrap();
        let bytes = encode_nifti(&v).unwrap();
        assert_eq!(bytes.len(), 352 + 256);
        assert_eq!(LittleEndian::read_i32(&bytes[0..4]), 348);
        assert_eq!(&bytes[344..348], b"n+1\0");
        assert_eq!(LittleEndian::read_i16(&bytes[70..72]), DT_FLOAT32);
        assert_eq!(LittleEndian::read_f32(&bytes[108..112]), 352.0);
        assert_eq!(LittleEndian::read_f32(&bytes[112..116]), 1.0);
        assert_eq!(LittleEndian::read_f32(&bytes[116..120]), 0.0);
    }

    #[test]
    fn qform_rotation_about_z() {
        // 180 degrees about z: (b, c, d) = (0, 0, 1).
        let h = NiftiHeader {
            qform_code: 1,
            quatern: [0.0, 0.0, 1.0],
            qoffset: [10.0, 20.0, 30.0],
            pixdim: [1.0, 2.0, 3.0, 4.0, 0.0, 0.0, 0.0, 0.0],
            ..NiftiHeader::default()
        };
        let a = h.affine();
        assert_eq!(a[0], [-2.0, 0.0, 0.0, 10.0]);
        assert_eq!(a[1], [0.0, -3.0, 0.0, 20.0]);
        assert_eq!(a[2], [0.0, 0.0, 4.0, 30.0]);
    }
}
