//! Zip-of-arrays model container.
//!
//! Each array is stored as its own zip entry holding raw little-endian,
//! C-order values. A one-line `manifest.json` entry records every array's
//! dtype and shape plus free-form metadata:
//!
//! ```json
//! {"format":"posegen-container","version":1,"kind":"body_model","arrays":{"v_template":{"dtype":"f64","shape":[12,3]}},"meta":{}}
//! ```

use std::collections::BTreeMap;
use std::io::{Cursor, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use zip::write::SimpleFileOptions;
use zip::{CompressionMethod, DateTime, ZipArchive, ZipWriter};

use crate::{Error, Result};

pub const MANIFEST_ENTRY: &str = "manifest.json";
pub const FORMAT_NAME: &str = "posegen-container";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    F64,
    F32,
    I64,
    I32,
}

impl DType {
    fn size(self) -> usize {
        match self {
            DType::F64 | DType::I64 => 8,
            DType::F32 | DType::I32 => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ArrayData {
    F64(Vec<f64>),
    F32(Vec<f32>),
    I64(Vec<i64>),
    I32(Vec<i32>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Array {
    pub shape: Vec<usize>,
    pub data: ArrayData,
}

impl Array {
    pub fn f64(shape: Vec<usize>, data: Vec<f64>) -> Self {
        Self { shape, data: ArrayData::F64(data) }
    }

    pub fn i64(shape: Vec<usize>, data: Vec<i64>) -> Self {
        Self { shape, data: ArrayData::I64(data) }
    }

    pub fn dtype(&self) -> DType {
        match self.data {
            ArrayData::F64(_) => DType::F64,
            ArrayData::F32(_) => DType::F32,
            ArrayData::I64(_) => DType::I64,
            ArrayData::I32(_) => DType::I32,
        }
    }

    pub fn len(&self) -> usize {
        match &self.data {
            ArrayData::F64(v) => v.len(),
            ArrayData::F32(v) => v.len(),
            ArrayData::I64(v) => v.len(),
            ArrayData::I32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Floating-point values widened to `f64`.
    pub fn to_f64(&self) -> Option<Vec<f64>> {
        match &self.data {
            ArrayData::F64(v) => Some(v.clone()),
            ArrayData::F32(v) => Some(v.iter().map(|&x| x as f64).collect()),
            _ => None,
        }
    }

    /// Integer values widened to `i64`.
    pub fn to_i64(&self) -> Option<Vec<i64>> {
        match &self.data {
            ArrayData::I64(v) => Some(v.clone()),
            ArrayData::I32(v) => Some(v.iter().map(|&x| x as i64).collect()),
            _ => None,
        }
    }

    fn to_bytes(&self) -> Vec<u8> {
        match &self.data {
            ArrayData::F64(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
            ArrayData::F32(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
            ArrayData::I64(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
            ArrayData::I32(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
        }
    }

    fn from_bytes(name: &str, entry: &ArrayEntry, bytes: &[u8]) -> Result<Self> {
        let count: usize = entry.shape.iter().product();
        let size = entry.dtype.size();
        if bytes.len() != count * size {
            return Err(Error::Format(format!(
                "array `{name}`: shape {:?} of {:?} needs {} bytes, entry has {}",
                entry.shape,
                entry.dtype,
                count * size,
                bytes.len()
            )));
        }
        let chunks = bytes.chunks_exact(size);
        let data = match entry.dtype {
            DType::F64 => ArrayData::F64(chunks.map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect()),
            DType::F32 => ArrayData::F32(chunks.map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect()),
            DType::I64 => ArrayData::I64(chunks.map(|c| i64::from_le_bytes(c.try_into().unwrap())).collect()),
            DType::I32 => ArrayData::I32(chunks.map(|c| i32::from_le_bytes(c.try_into().unwrap())).collect()),
        };
        Ok(Self { shape: entry.shape.clone(), data })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ArrayEntry {
    dtype: DType,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    kind: String,
    arrays: BTreeMap<String, ArrayEntry>,
    #[serde(default)]
    meta: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Container {
    pub kind: String,
    pub meta: Map<String, Value>,
    pub arrays: BTreeMap<String, Array>,
}

impl Container {
    pub fn new(kind: impl Into<String>) -> Self {
        Self {
            kind: kind.into(),
            ..Default::default()
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, array: Array) {
        self.arrays.insert(name.into(), array);
    }

    pub fn get(&self, name: &str) -> Result<&Array> {
        self.arrays
            .get(name)
            .ok_or_else(|| Error::Format(format!("{} container is missing array `{name}`", self.kind)))
    }

    /// Float array `name`, checking its rank and any fixed dimensions
    /// (`None` entries are free).
    pub fn floats(&self, name: &str, dims: &[Option<usize>]) -> Result<(Vec<usize>, Vec<f64>)> {
        let a = self.get(name)?;
        check_dims(name, &a.shape, dims)?;
        let v = a
            .to_f64()
            .ok_or_else(|| Error::Format(format!("array `{name}` must be f64 or f32, found {:?}", a.dtype())))?;
        Ok((a.shape.clone(), v))
    }

    pub fn ints(&self, name: &str, dims: &[Option<usize>]) -> Result<(Vec<usize>, Vec<i64>)> {
        let a = self.get(name)?;
        check_dims(name, &a.shape, dims)?;
        let v = a
            .to_i64()
            .ok_or_else(|| Error::Format(format!("array `{name}` must be i64 or i32, found {:?}", a.dtype())))?;
        Ok((a.shape.clone(), v))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let manifest = Manifest {
            format: FORMAT_NAME.into(),
            version: FORMAT_VERSION,
            kind: self.kind.clone(),
            arrays: self
                .arrays
                .iter()
                .map(|(k, a)| {
                    (
                        k.clone(),
                        ArrayEntry {
                            dtype: a.dtype(),
                            shape: a.shape.clone(),
                        },
                    )
                })
                .collect(),
            meta: self.meta.clone(),
        };
        for (name, a) in &self.arrays {
            if a.shape.iter().product::<usize>() != a.len() {
                return Err(Error::Format(format!(
                    "array `{name}` has {} values but shape {:?}",
                    a.len(),
                    a.shape
                )));
            }
        }
        // fixed timestamp so identical content gives identical files
        let opts = SimpleFileOptions::default()
            .compression_method(CompressionMethod::Deflated)
            .last_modified_time(DateTime::default());
        let mut zip = ZipWriter::new(Cursor::new(Vec::new()));
        zip.start_file(MANIFEST_ENTRY, opts).map_err(zip_err)?;
        zip.write_all(serde_json::to_string(&manifest)?.as_bytes())
            .map_err(|e| Error::Format(e.to_string()))?;
        for (name, a) in &self.arrays {
            zip.start_file(name.as_str(), opts).map_err(zip_err)?;
            zip.write_all(&a.to_bytes()).map_err(|e| Error::Format(e.to_string()))?;
        }
        Ok(zip.finish().map_err(zip_err)?.into_inner())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut zip = ZipArchive::new(Cursor::new(bytes)).map_err(zip_err)?;
        let manifest: Manifest = {
            let mut entry = zip
                .by_name(MANIFEST_ENTRY)
                .map_err(|_| Error::Format(format!("container has no `{MANIFEST_ENTRY}` entry")))?;
            let mut text = String::new();
            entry
                .read_to_string(&mut text)
                .map_err(|e| Error::Format(format!("reading manifest: {e}")))?;
            serde_json::from_str(&text)?
        };
        if manifest.format != FORMAT_NAME {
            return Err(Error::Format(format!("not a {FORMAT_NAME} file (format `{}`)", manifest.format)));
        }
        if manifest.version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported container version {} (expected {FORMAT_VERSION})",
                manifest.version
            )));
        }
        let mut arrays = BTreeMap::new();
        for (name, entry) in &manifest.arrays {
            let mut file = zip
                .by_name(name)
                .map_err(|_| Error::Format(format!("manifest lists `{name}` but the entry is missing")))?;
            let mut bytes = Vec::with_capacity(file.size() as usize);
            file.read_to_end(&mut bytes)
                .map_err(|e| Error::Format(format!("reading `{name}`: {e}")))?;
            arrays.insert(name.clone(), Array::from_bytes(name, entry, &bytes)?);
        }
        Ok(Self {
            kind: manifest.kind,
            meta: manifest.meta,
            arrays,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| e.context(path))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }
}

fn check_dims(name: &str, shape: &[usize], dims: &[Option<usize>]) -> Result<()> {
    let ok = shape.len() == dims.len() && shape.iter().zip(dims).all(|(s, d)| d.map_or(true, |d| d == *s));
    if ok {
        return Ok(());
    }
    let want: Vec<String> = dims
        .iter()
        .map(|d| d.map_or_else(|| "*".to_string(), |d| d.to_string()))
        .collect();
    Err(Error::Format(format!(
        "array `{name}` has shape {shape:?}, expected [{}]",
        want.join(", ")
    )))
}

fn zip_err(e: zip::result::ZipError) -> Error {
    Error::Format(format!("zip: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_everything() {
        let mut c = Container::new("test");
        c.insert("a", Array::f64(vec![2, 2], vec![1.0, -0.0, f64::MIN_POSITIVE, 3.5]));
        c.insert("b", Array::i64(vec![3], vec![-1, 0, 1]));
        c.insert(
            "c",
            Array {
                shape: vec![0, 3],
                data: ArrayData::F32(vec![]),
            },
        );
        c.meta.insert("latent_dim".into(), 8.into());
        let bytes = c.to_bytes().unwrap();
        assert_eq!(Container::from_bytes(&bytes).unwrap(), c);
        assert_eq!(c.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn manifest_is_one_line() {
        let mut c = Container::new("test");
        c.insert("a", Array::f64(vec![1], vec![1.0]));
        let bytes = c.to_bytes().unwrap();
        let mut zip = ZipArchive::new(Cursor::new(bytes)).unwrap();
        let mut text = String::new();
        zip.by_name(MANIFEST_ENTRY).unwrap().read_to_string(&mut text).unwrap();
        assert!(!text.contains('\n'));
        assert!(text.contains("\"shape\":[1]"));
    }

    #[test]
    fn detects_size_and_dims_problems() {
        let mut c = Container::new("test");
        c.insert("a", Array::f64(vec![2, 2], vec![1.0]));
        assert!(c.to_bytes().is_err());
        let mut c = Container::new("test");
        c.insert("a", Array::f64(vec![2, 3], vec![0.0; 6]));
        assert!(c.floats("a", &[Some(2), Some(3)]).is_ok());
        assert!(c.floats("a", &[None, Some(2)]).is_err());
        assert!(c.floats("a", &[None]).is_err());
        assert!(c.ints("a", &[None, None]).is_err());
        assert!(c.floats("missing", &[None]).is_err());
    }

    #[test]
    fn rejects_foreign_zip() {
        let mut zip = ZipWriter::new(Cursor::new(Vec::new()));
        zip.start_file("hello.txt", SimpleFileOptions::default()).unwrap();
        zip.write_all(b"hi").unwrap();
        let bytes = zip.finish().unwrap().into_inner();
        assert!(Container::from_bytes(&bytes).is_err());
        assert!(Container::from_bytes(b"not a zip").is_err());
    }
}
