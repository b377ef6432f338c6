use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use walkdir::WalkDir;
use zip::write::SimpleFileOptions;
use zip::{CompressionMethod, DateTime, ZipArchive, ZipWriter};

use super::{dir_name, io_err, subdirectories, write_err, PrepError};

fn zip_err(path: &Path) -> impl FnOnce(zip::result::ZipError) -> PrepError + '_ {
    move |e| PrepError::Zip {
        path: path.to_path_buf(),
        reason: e.to_string(),
    }
}

/// Zip the contents of `dir` (entries relative to `dir`) into `target`.
/// Entries are sorted, timestamps fixed at 1980-01-01 and permissions
/// normalized, so the same tree always produces the same bytes.
pub fn zip_directory(dir: &Path, target: &Path) -> Result<(), PrepError> {
    let file = File::create(target).map_err(write_err(target))?;
    let mut zip = ZipWriter::new(BufWriter::new(file));
    let base = SimpleFileOptions::default().last_modified_time(DateTime::DEFAULT);
    let file_options = base
        .compression_method(CompressionMethod::Deflated)
        .unix_permissions(0o644);
    let dir_options = base
        .compression_method(CompressionMethod::Stored)
        .unix_permissions(0o755);

    for entry in WalkDir::new(dir).min_depth(1).sort_by_file_name() {
        let entry = entry.map_err(|e| PrepError::Io {
            path: dir.to_path_buf(),
            source: e
                .into_io_error()
                .unwrap_or_else(|| std::io::Error::other("walk failed")),
        })?;
        let rel = entry
            .path()
            .strip_prefix(dir)
            .expect("walk stays under root");
        let name = rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        if entry.file_type().is_dir() {
            zip.add_directory(name, dir_options)
                .map_err(zip_err(target))?;
        } else if entry.file_type().is_file() {
            let bytes = std::fs::read(entry.path()).map_err(io_err(entry.path()))?;
            zip.start_file(name, file_options)
                .map_err(zip_err(target))?;
            zip.write_all(&bytes).map_err(write_err(target))?;
        }
    }
    let mut out = zip.finish().map_err(zip_err(target))?;
    out.flush().map_err(write_err(target))?;
    Ok(())
}

/// Turn each top-level directory `D` of `input_root` into `<output>/D.zip`.
pub fn package_directories(input_root: &Path, output: &Path) -> Result<Vec<PathBuf>, PrepError> {
    let dirs = subdirectories(input_root)?;
    std::fs::create_dir_all(output).map_err(write_err(output))?;
    let mut archives = Vec::with_capacity(dirs.len());
    for dir in dirs {
        let target = output.join(format!("{}.zip", dir_name(&dir)));
        zip_directory(&dir, &target)?;
        archives.push(target);
    }
    Ok(archives)
}

/// Unpack `archive` into `dest`. Entries that would escape `dest` are
/// rejected.
pub fn unzip(archive: &Path, dest: &Path) -> Result<(), PrepError> {
    let file = File::open(archive).map_err(io_err(archive))?;
    let mut zip = ZipArchive::new(file).map_err(zip_err(archive))?;
    std::fs::create_dir_all(dest).map_err(write_err(dest))?;
    zip.extract(dest).map_err(zip_err(archive))
}
