//! Binary tensor container and model checkpoints.
//!
//! One container format serves checkpoints, dataset tensors, and generated
//! output: a UTF-8 manifest listing tensor names, shapes, and byte offsets,
//! followed by the raw little-endian f64 payload. Round-trips are bit-exact.
//!
//! ```text
//! FWC1
//! tensor <name> <d0>x<d1>... <byte_offset> <byte_len>
//! ...
//! payload <total_bytes>
//! <raw little-endian f64 data>
//! ```

use crate::diffcore::NdArray;
use crate::error::{Error, Result};
use crate::nets::ModelBundle;
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &str = "FWC1";

fn name_ok(name: &str) -> bool {
    !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.' || c == '-')
}

/// Writes named tensors in the given order.
pub fn write_container(path: &Path, tensors: &[(String, &NdArray)]) -> Result<()> {
    let p = path.display().to_string();
    let mut header = String::new();
    header.push_str(MAGIC);
    header.push('\n');
    let mut offset = 0usize;
    for (name, arr) in tensors {
        assert!(name_ok(name), "bad tensor name {name:?}");
        let bytes = arr.len() * 8;
        let shape = arr
            .shape()
            .iter()
            .map(|d| d.to_string())
            .collect::<Vec<_>>()
            .join("x");
        header.push_str(&format!("tensor {name} {shape} {offset} {bytes}\n"));
        offset += bytes;
    }
    header.push_str(&format!("payload {offset}\n"));

    let mut f = std::fs::File::create(path).map_err(|e| Error::io(&p, e))?;
    f.write_all(header.as_bytes()).map_err(|e| Error::io(&p, e))?;
    let mut buf = Vec::with_capacity(offset);
    for (_, arr) in tensors {
        for v in arr.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    f.write_all(&buf).map_err(|e| Error::io(&p, e))?;
    Ok(())
}

/// Reads all tensors, preserving manifest order.
pub fn read_container(path: &Path) -> Result<Vec<(String, NdArray)>> {
    let p = path.display().to_string();
    let mut f = std::fs::File::open(path).map_err(|e| Error::io(&p, e))?;
    let mut raw = Vec::new();
    f.read_to_end(&mut raw).map_err(|e| Error::io(&p, e))?;

    let parse_err = |line: usize, msg: String| Error::Parse {
        path: p.clone(),
        line,
        msg,
    };

    // Split the header (text until the payload line) from the binary body.
    let mut pos = 0usize;
    let mut line_no = 0usize;
    let mut entries: Vec<(String, Vec<usize>, usize, usize)> = Vec::new();
    let mut payload_len: Option<usize> = None;
    while pos < raw.len() {
        let nl = raw[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| parse_err(line_no + 1, "unterminated header line".into()))?;
        let line = std::str::from_utf8(&raw[pos..pos + nl])
            .map_err(|_| parse_err(line_no + 1, "header is not UTF-8".into()))?;
        pos += nl + 1;
        line_no += 1;
        if line_no == 1 {
            if line != MAGIC {
                return Err(parse_err(1, format!("bad magic {line:?}")));
            }
            continue;
        }
        let mut parts = line.split(' ');
        match parts.next() {
            Some("tensor") => {
                let name = parts
                    .next()
                    .ok_or_else(|| parse_err(line_no, "missing tensor name".into()))?;
                let shape_s = parts
                    .next()
                    .ok_or_else(|| parse_err(line_no, "missing shape".into()))?;
                let off: usize = parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| parse_err(line_no, "bad offset".into()))?;
                let len: usize = parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| parse_err(line_no, "bad length".into()))?;
                let shape: Vec<usize> = shape_s
                    .split('x')
                    .map(|d| d.parse::<usize>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| parse_err(line_no, format!("bad shape {shape_s:?}")))?;
                if !name_ok(name) {
                    return Err(parse_err(line_no, format!("bad tensor name {name:?}")));
                }
                entries.push((name.to_string(), shape, off, len));
            }
            Some("payload") => {
                let n: usize = parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| parse_err(line_no, "bad payload length".into()))?;
                payload_len = Some(n);
                break;
            }
            other => {
                return Err(parse_err(
                    line_no,
                    format!("unexpected header token {other:?}"),
                ));
            }
        }
    }
    let payload_len =
        payload_len.ok_or_else(|| parse_err(line_no, "missing payload line".into()))?;
    let body = &raw[pos..];
    if body.len() != payload_len {
        return Err(parse_err(
            line_no,
            format!("payload is {} bytes, manifest says {payload_len}", body.len()),
        ));
    }

    let mut out = Vec::with_capacity(entries.len());
    for (name, shape, off, len) in entries {
        let n: usize = shape.iter().product();
        if len != n * 8 || off + len > body.len() {
            return Err(parse_err(
                line_no,
                format!("tensor {name} range {off}+{len} inconsistent with shape {shape:?}"),
            ));
        }
        let mut data = Vec::with_capacity(n);
        for chunk in body[off..off + len].chunks_exact(8) {
            data.push(f64::from_le_bytes(chunk.try_into().unwrap()));
        }
        out.push((name, NdArray::new(shape, data)?));
    }
    Ok(out)
}

/// Writes a trained model checkpoint: all four networks' parameters plus the
/// ABP normalization scale the model was trained with.
pub fn save_checkpoint(path: &Path, bundle: &ModelBundle, abp_scale: (f64, f64)) -> Result<()> {
    let scale = NdArray::from_vec(vec![abp_scale.0, abp_scale.1]);
    let mut tensors: Vec<(String, &NdArray)> = vec![("abp_scale".to_string(), &scale)];
    let named = bundle.named_params();
    tensors.extend(named);
    write_container(path, &tensors)
}

/// Loads a checkpoint into a structurally fresh bundle. Every parameter must
/// be present with the exact shape; mismatches are rejected by name.
pub fn load_checkpoint(path: &Path) -> Result<(ModelBundle, (f64, f64))> {
    let tensors = read_container(path)?;
    let mut bundle = crate::nets::init_bundle(0);
    let mut scale: Option<(f64, f64)> = None;
    let mut by_name: std::collections::BTreeMap<String, NdArray> = std::collections::BTreeMap::new();
    for (name, arr) in tensors {
        if name == "abp_scale" {
            if arr.len() != 2 {
                return Err(Error::StructuralMismatch {
                    param: name,
                    msg: "abp_scale must have 2 entries".into(),
                });
            }
            scale = Some((arr.data()[0], arr.data()[1]));
        } else {
            by_name.insert(name, arr);
        }
    }
    for (name, param) in bundle.named_params_mut() {
        let arr = by_name.remove(&name).ok_or_else(|| Error::StructuralMismatch {
            param: name.clone(),
            msg: "missing from checkpoint".into(),
        })?;
        if arr.shape() != param.shape() {
            return Err(Error::StructuralMismatch {
                param: name,
                msg: format!("shape {:?} != expected {:?}", arr.shape(), param.shape()),
            });
        }
        *param = arr;
    }
    if let Some((name, _)) = by_name.into_iter().next() {
        return Err(Error::StructuralMismatch {
            param: name,
            msg: "unknown tensor in checkpoint".into(),
        });
    }
    bundle.reset_optimizer();
    let scale = scale.ok_or_else(|| Error::StructuralMismatch {
        param: "abp_scale".into(),
        msg: "missing from checkpoint".into(),
    })?;
    Ok((bundle, scale))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::init_bundle;

    #[test]
    fn container_roundtrip_bit_exact() {
        let dir = tempdir();
        let path = dir.join("t.fwc");
        let a = NdArray::new(vec![2, 3], vec![0.1, -2.5e-300, f64::MIN_POSITIVE, 1e300, -0.0, 3.75]).unwrap();
        let b = NdArray::from_vec(vec![42.0]);
        write_container(&path, &[("alpha".into(), &a), ("beta.x".into(), &b)]).unwrap();
        let back = read_container(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].0, "alpha");
        assert_eq!(back[0].1.shape(), &[2, 3]);
        for (x, y) in back[0].1.data().iter().zip(a.data()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        assert_eq!(back[1].1.data(), &[42.0]);
        std::fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn checkpoint_roundtrip_restores_every_parameter() {
        let dir = tempdir();
        let path = dir.join("m.ckpt");
        let bundle = init_bundle(123);
        save_checkpoint(&path, &bundle, (30.0, 220.0)).unwrap();
        let (loaded, scale) = load_checkpoint(&path).unwrap();
        assert_eq!(scale, (30.0, 220.0));
        for ((n1, p1), (n2, p2)) in bundle.named_params().iter().zip(loaded.named_params()) {
            assert_eq!(n1, &n2);
            assert_eq!(p1.data(), p2.data(), "parameter {n1} changed");
        }
        std::fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn truncated_payload_rejected() {
        let dir = tempdir();
        let path = dir.join("bad.fwc");
        let a = NdArray::from_vec(vec![1.0, 2.0]);
        write_container(&path, &[("a".into(), &a)]).unwrap();
        let raw = std::fs::read(&path).unwrap();
        std::fs::write(&path, &raw[..raw.len() - 4]).unwrap();
        assert!(read_container(&path).is_err());
        std::fs::remove_dir_all(dir).unwrap();
    }

    fn tempdir() -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!(
            "fedwave-ckpt-test-{}-{:?}",
            std::process::id(),
            std::thread::current().id()
        ));
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }
}
