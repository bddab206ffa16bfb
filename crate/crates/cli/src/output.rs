//! File emission: text files, raw float grids and optional PNG previews.

use std::fs;
use std::path::{Path, PathBuf};

use tikreg::problems::write_f64_file;

use crate::CliError;

pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| CliError::Io(format!("{}: {e}", root.display())))?;
        Ok(OutDir { root: root.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn text(&self, name: &str, content: &str) -> Result<(), CliError> {
        let p = self.path(name);
        fs::write(&p, content).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))
    }

    pub fn floats(&self, name: &str, v: &[f64]) -> Result<(), CliError> {
        write_f64_file(&self.path(name), v).map_err(CliError::from)
    }

    /// Grayscale PNG of an `n×n` column-major image, mapping `[0, vmax]` to
    /// black..white and clipping outside.
    pub fn png(&self, name: &str, img: &[f64], n: usize, vmax: f64) -> Result<(), CliError> {
        let buf = image::GrayImage::from_fn(n as u32, n as u32, |col, row| {
            let v = img[col as usize * n + row as usize] / vmax;
            image::Luma([(v.clamp(0.0, 1.0) * 255.0).round() as u8])
        });
        let p = self.path(name);
        buf.save(&p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))
    }
}
