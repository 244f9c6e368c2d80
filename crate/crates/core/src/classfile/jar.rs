//! Jar (zip) archive reading and writing.

use std::fs::File;
use std::io::{Cursor, Read, Seek, Write};
use std::path::Path;

use zip::write::SimpleFileOptions;
use zip::{CompressionMethod, DateTime, ZipArchive, ZipWriter};

use super::ClassFileError;

/// One archive member. Directory entries have a name ending in `/` and no data.
#[derive(Clone, Debug, PartialEq)]
pub struct JarEntry {
    pub name: String,
    pub data: Vec<u8>,
    /// Original modification time, carried over on write.
    pub modified: Option<DateTime>,
}

impl JarEntry {
    pub fn new(name: impl Into<String>, data: Vec<u8>) -> Self {
        JarEntry { name: name.into(), data, modified: None }
    }

    pub fn is_dir(&self) -> bool {
        self.name.ends_with('/')
    }

    pub fn is_class(&self) -> bool {
        self.name.ends_with(".class") && !self.is_dir()
    }
}

fn archive_err(e: impl std::fmt::Display) -> ClassFileError {
    ClassFileError::Archive(e.to_string())
}

/// Reads every entry of a jar, in archive order.
pub fn read_jar(path: &Path) -> Result<Vec<JarEntry>, ClassFileError> {
    read_jar_from(File::open(path)?)
}

pub fn read_jar_bytes(bytes: &[u8]) -> Result<Vec<JarEntry>, ClassFileError> {
    read_jar_from(Cursor::new(bytes))
}

fn read_jar_from<R: Read + Seek>(reader: R) -> Result<Vec<JarEntry>, ClassFileError> {
    let mut archive = ZipArchive::new(reader).map_err(archive_err)?;
    let mut out = Vec::with_capacity(archive.len());
    for i in 0..archive.len() {
        let mut f = archive.by_index(i).map_err(archive_err)?;
        let mut data = Vec::with_capacity(f.size() as usize);
        f.read_to_end(&mut data)?;
        out.push(JarEntry { name: f.name().to_string(), data, modified: f.last_modified() });
    }
    Ok(out)
}

/// Writes entries in the given order; files are deflated.
pub fn write_jar(entries: &[JarEntry], path: &Path) -> Result<(), ClassFileError> {
    let mut f = File::create(path)?;
    f.write_all(&write_jar_bytes(entries)?)?;
    Ok(())
}

pub fn write_jar_bytes(entries: &[JarEntry]) -> Result<Vec<u8>, ClassFileError> {
    let mut w = ZipWriter::new(Cursor::new(Vec::new()));
    for e in entries {
        let opts = SimpleFileOptions::default()
            .compression_method(CompressionMethod::Deflated)
            .last_modified_time(e.modified.unwrap_or_default());
        if e.is_dir() {
            w.add_directory(e.name.trim_end_matches('/'), opts).map_err(archive_err)?;
        } else {
            w.start_file(e.name.as_str(), opts).map_err(archive_err)?;
            w.write_all(&e.data)?;
        }
    }
    Ok(w.finish().map_err(archive_err)?.into_inner())
}
