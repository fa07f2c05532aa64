//! Readers and writers for every on-disk format the benchmark touches.
//!
//! All readers are pure byte-to-value functions and report truncated or
//! malformed input as [`Error::Format`](crate::Error::Format).

pub mod binvox;
pub mod nifti;
pub mod ply;
pub mod scannet;
pub mod sev;
pub mod voxelize;

use std::path::Path;

pub use binvox::{read_binvox, write_binvox, Binvox};
pub use nifti::{read_nifti, write_nifti, NiftiDataType};
pub use ply::read_ply_vertices;
pub use scannet::{read_ply_with_instances, PointCloud};
pub use sev::{read_sev, write_sev, SevVolume};
pub use voxelize::{voxelize, voxelize_in_frame, VoxelFrame};

use crate::error::{Error, Result};
use crate::grid::VoxelGrid;

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Volume file kinds recognized by extension.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FileKind {
    Binvox,
    Nifti,
    NiftiGz,
    Sev,
    Ply,
}

impl FileKind {
    pub fn from_path(path: &Path) -> Option<Self> {
        let name = path.file_name()?.to_str()?.to_ascii_lowercase();
        if name.ends_with(".nii.gz") {
            Some(FileKind::NiftiGz)
        } else if name.ends_with(".nii") {
            Some(FileKind::Nifti)
        } else if name.ends_with(".binvox") {
            Some(FileKind::Binvox)
        } else if name.ends_with(".sev") {
            Some(FileKind::Sev)
        } else if name.ends_with(".ply") {
            Some(FileKind::Ply)
        } else {
            None
        }
    }
}

/// Reads any supported dense volume file, picking the decoder by extension.
pub fn read_volume(path: &Path) -> Result<VoxelGrid> {
    let bytes = read_file(path)?;
    match FileKind::from_path(path) {
        Some(FileKind::Binvox) => Ok(read_binvox(&bytes)?.grid),
        Some(FileKind::Nifti) => read_nifti(&bytes, false),
        Some(FileKind::NiftiGz) => read_nifti(&bytes, true),
        Some(FileKind::Sev) => Ok(read_sev(&bytes)?.grid),
        _ => Err(Error::Validation(format!(
            "unsupported volume file {}",
            path.display()
        ))),
    }
}

pub fn read_sev_path(path: &Path) -> Result<VoxelGrid> {
    Ok(read_sev(&read_file(path)?)?.grid)
}

pub fn write_sev_path(path: &Path, grid: &VoxelGrid) -> Result<()> {
    write_file(path, &write_sev(grid))
}

/// Bounds-checked little cursor over a byte slice.
pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    format: &'static str,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(bytes: &'a [u8], format: &'static str) -> Self {
        Reader {
            bytes,
            pos: 0,
            format,
        }
    }

    pub(crate) fn remaining(&self) -> &'a [u8] {
        &self.bytes[self.pos..]
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let out = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(out)
            }
            None => Err(Error::format(
                self.format,
                format!(
                    "truncated input: need {n} bytes at offset {}, have {}",
                    self.pos,
                    self.bytes.len() - self.pos
                ),
            )),
        }
    }

    pub(crate) fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.array::<1>()?[0])
    }

    /// Next `\n`-terminated line without the terminator (and any `\r`).
    pub(crate) fn line(&mut self) -> Result<&'a str> {
        let rest = self.remaining();
        let Some(n) = rest.iter().position(|&b| b == b'\n') else {
            return Err(Error::format(self.format, "truncated header: missing line break"));
        };
        let line = &rest[..n];
        self.pos += n + 1;
        let line = line.strip_suffix(b"\r").unwrap_or(line);
        std::str::from_utf8(line)
            .map_err(|_| Error::format(self.format, "header line is not valid text"))
    }
}
