//! NPY v1.0 reader and writer (little-endian f4/f8/i8, C order).

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{ArrayD, IxDyn};

use crate::error::{BenchError, Result};

const MAGIC: &[u8] = b"\x93NUMPY";
const ALIGN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F4,
    F8,
    I8,
}

impl Dtype {
    fn descr(self) -> &'static str {
        match self {
            Dtype::F4 => "<f4",
            Dtype::F8 => "<f8",
            Dtype::I8 => "<i8",
        }
    }

    fn size(self) -> usize {
        match self {
            Dtype::F4 => 4,
            Dtype::F8 | Dtype::I8 => 8,
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "<f4" => Some(Dtype::F4),
            "<f8" => Some(Dtype::F8),
            "<i8" => Some(Dtype::I8),
            _ => None,
        }
    }
}

/// A parsed NPY payload before conversion.
#[derive(Debug, Clone, PartialEq)]
pub struct Npy {
    pub dtype: Dtype,
    pub shape: Vec<usize>,
    data: Vec<u8>,
}

fn format_err(path: &Path, msg: impl Into<String>) -> BenchError {
    BenchError::Format {
        path: path.to_path_buf(),
        reason: msg.into(),
    }
}

/// Value of `'key': <value>` in the header dict, up to the next top-level
/// comma or closing brace.
fn header_field<'a>(header: &'a str, key: &str) -> Option<&'a str> {
    let pat = format!("'{key}':");
    let start = header.find(&pat)? + pat.len();
    let rest = header[start..].trim_start();
    let end = if rest.starts_with('(') {
        rest.find(')')? + 1
    } else {
        rest.find([',', '}'])?
    };
    Some(rest[..end].trim())
}

fn parse_header(path: &Path, header: &str) -> Result<(Dtype, Vec<usize>)> {
    let descr = header_field(header, "descr").ok_or_else(|| format_err(path, "header has no descr"))?;
    let descr = descr.trim_matches(|c| c == '\'' || c == '"');
    let dtype = Dtype::parse(descr).ok_or_else(|| BenchError::Unsupported {
        path: path.to_path_buf(),
        reason: format!("dtype `{descr}`; expected <f4, <f8 or <i8"),
    })?;
    match header_field(header, "fortran_order") {
        Some("False") => {}
        Some("True") => {
            return Err(BenchError::Unsupported {
                path: path.to_path_buf(),
                reason: "fortran_order arrays; only C order is read".into(),
            })
        }
        _ => return Err(format_err(path, "header has no valid fortran_order")),
    }
    let shape = header_field(header, "shape").ok_or_else(|| format_err(path, "header has no shape"))?;
    let inner = shape
        .strip_prefix('(')
        .and_then(|s| s.strip_suffix(')'))
        .ok_or_else(|| format_err(path, format!("bad shape `{shape}`")))?;
    let dims = inner
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<usize>()
                .map_err(|_| format_err(path, format!("bad shape `{shape}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((dtype, dims))
}

pub fn read_npy(path: &Path) -> Result<Npy> {
    let bytes = fs::read(path).map_err(|e| BenchError::io(path, e))?;
    if bytes.len() < 10 || &bytes[..6] != MAGIC {
        return Err(format_err(path, "missing NPY magic"));
    }
    if bytes[6] != 1 {
        return Err(BenchError::Unsupported {
            path: path.to_path_buf(),
            reason: format!("NPY version {}.{}; only 1.0 is read", bytes[6], bytes[7]),
        });
    }
    let hlen = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    let body = 10 + hlen;
    if bytes.len() < body {
        return Err(format_err(path, "truncated header"));
    }
    let header = std::str::from_utf8(&bytes[10..body]).map_err(|_| format_err(path, "header is not ASCII"))?;
    let (dtype, shape) = parse_header(path, header)?;
    let count: usize = shape.iter().product();
    let want = count * dtype.size();
    if bytes.len() - body != want {
        return Err(format_err(
            path,
            format!("payload is {} bytes, shape {shape:?} needs {want}", bytes.len() - body),
        ));
    }
    Ok(Npy {
        dtype,
        shape,
        data: bytes[body..].to_vec(),
    })
}

impl Npy {
    /// Float view; f4 is widened, i8 is converted.
    pub fn to_f64(&self) -> ArrayD<f64> {
        let v: Vec<f64> = match self.dtype {
            Dtype::F4 => self
                .data
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect(),
            Dtype::F8 => self
                .data
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
            Dtype::I8 => self.ints().into_iter().map(|x| x as f64).collect(),
        };
        ArrayD::from_shape_vec(IxDyn(&self.shape), v).unwrap()
    }

    fn ints(&self) -> Vec<i64> {
        self.data
            .chunks_exact(8)
            .map(|c| i64::from_le_bytes(c.try_into().unwrap()))
            .collect()
    }

    pub fn to_i64(&self, path: &Path) -> Result<ArrayD<i64>> {
        if self.dtype != Dtype::I8 {
            return Err(BenchError::Unsupported {
                path: path.to_path_buf(),
                reason: format!("expected integer data, found {}", self.dtype.descr()),
            });
        }
        Ok(ArrayD::from_shape_vec(IxDyn(&self.shape), self.ints()).unwrap())
    }
}

pub fn read_array(path: &Path) -> Result<ArrayD<f64>> {
    Ok(read_npy(path)?.to_f64())
}

pub fn read_ints(path: &Path) -> Result<ArrayD<i64>> {
    read_npy(path)?.to_i64(path)
}

fn header_bytes(dtype: Dtype, shape: &[usize]) -> Vec<u8> {
    let dims = match shape.len() {
        1 => format!("({},)", shape[0]),
        _ => format!(
            "({})",
            shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(", ")
        ),
    };
    let mut h = format!(
        "{{'descr': '{}', 'fortran_order': False, 'shape': {dims}, }}",
        dtype.descr()
    );
    let unpadded = MAGIC.len() + 4 + h.len() + 1;
    h.push_str(&" ".repeat((ALIGN - unpadded % ALIGN) % ALIGN));
    h.push('\n');
    let mut out = Vec::with_capacity(MAGIC.len() + 4 + h.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(h.len() as u16).to_le_bytes());
    out.extend_from_slice(h.as_bytes());
    out
}

fn write_bytes(path: &Path, header: Vec<u8>, payload: impl Iterator<Item = [u8; 8]>) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| BenchError::io(path, e))?;
    let mut buf = header;
    for b in payload {
        buf.extend_from_slice(&b);
    }
    f.write_all(&buf).map_err(|e| BenchError::io(path, e))
}

/// Writes `<f8` in C order.
pub fn write_array<D: ndarray::Dimension>(path: &Path, a: &ndarray::Array<f64, D>) -> Result<()> {
    let std = a.as_standard_layout();
    write_bytes(
        path,
        header_bytes(Dtype::F8, a.shape()),
        std.iter().map(|v| v.to_le_bytes()),
    )
}

/// Writes `<i8` in C order.
pub fn write_ints<D: ndarray::Dimension>(path: &Path, a: &ndarray::Array<i64, D>) -> Result<()> {
    let std = a.as_standard_layout();
    write_bytes(
        path,
        header_bytes(Dtype::I8, a.shape()),
        std.iter().map(|v| v.to_le_bytes()),
    )
}

/// Writes `<f4` in C order. Used to produce files in the exporter's
/// precision.
pub fn write_f32<D: ndarray::Dimension>(path: &Path, a: &ndarray::Array<f64, D>) -> Result<()> {
    let std = a.as_standard_layout();
    let mut f = fs::File::create(path).map_err(|e| BenchError::io(path, e))?;
    let mut buf = header_bytes(Dtype::F4, a.shape());
    for v in std.iter() {
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    f.write_all(&buf).map_err(|e| BenchError::io(path, e))
}
