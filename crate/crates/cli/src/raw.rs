//! Raw little-endian coordinate files.

use std::fs;
use std::path::{Path, PathBuf};

use gpz::{AnyDataset, Coordinate, Dataset, GpzError, Precision};

use crate::CliError;

pub const AXIS_NAMES: [&str; 3] = ["x", "y", "z"];

fn read_values<T: Coordinate>(path: &Path) -> Result<Vec<T>, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    let width = T::PRECISION.bytes();
    if bytes.len() % width != 0 {
        return Err(GpzError::domain(format!(
            "{}: {} bytes is not a whole number of {} values",
            path.display(),
            bytes.len(),
            T::PRECISION
        ))
        .into());
    }
    Ok(bytes.chunks_exact(width).map(T::read_le).collect())
}

fn load_as<T: Coordinate>(inputs: &[PathBuf], interleaved: bool, dims: usize) -> Result<Dataset<T>, CliError> {
    if interleaved {
        let values = read_values::<T>(&inputs[0])?;
        Ok(Dataset::from_interleaved(&values, dims)?)
    } else {
        let axes = inputs.iter().map(|p| read_values::<T>(p)).collect::<Result<Vec<_>, _>>()?;
        Ok(Dataset::new(axes)?)
    }
}

/// Reads either one interleaved file or one file per axis.
pub fn load(inputs: &[PathBuf], interleaved: bool, precision: Precision, dims: usize) -> Result<AnyDataset, CliError> {
    if interleaved && inputs.len() != 1 {
        return Err(CliError::Usage(format!("--interleaved takes one input file, got {}", inputs.len())));
    }
    if !interleaved && inputs.len() != dims {
        return Err(CliError::Usage(format!(
            "{dims} dimensions need {dims} per-axis input files, got {}",
            inputs.len()
        )));
    }
    Ok(match precision {
        Precision::F32 => load_as::<f32>(inputs, interleaved, dims)?.into(),
        Precision::F64 => load_as::<f64>(inputs, interleaved, dims)?.into(),
    })
}

pub fn axis_path(prefix: &Path, axis: usize) -> PathBuf {
    let mut name = prefix.as_os_str().to_owned();
    name.push(format!(".{}.bin", AXIS_NAMES[axis]));
    PathBuf::from(name)
}

pub fn interleaved_path(prefix: &Path) -> PathBuf {
    let mut name = prefix.as_os_str().to_owned();
    name.push(".xyz.bin");
    PathBuf::from(name)
}

fn encode<T: Coordinate>(values: impl Iterator<Item = T>) -> Vec<u8> {
    let mut out = Vec::new();
    for v in values {
        v.write_le(&mut out);
    }
    out
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn store_as<T: Coordinate>(ds: &Dataset<T>, prefix: &Path, interleaved: bool) -> Result<Vec<PathBuf>, CliError> {
    if interleaved {
        let path = interleaved_path(prefix);
        let values = (0..ds.len()).flat_map(|i| ds.axes().iter().map(move |a| a[i]));
        write(&path, &encode(values))?;
        return Ok(vec![path]);
    }
    ds.axes()
        .iter()
        .enumerate()
        .map(|(a, axis)| {
            let path = axis_path(prefix, a);
            write(&path, &encode(axis.iter().copied()))?;
            Ok(path)
        })
        .collect()
}

/// Writes one file per axis, or a single interleaved file.
pub fn store(ds: &AnyDataset, prefix: &Path, interleaved: bool) -> Result<Vec<PathBuf>, CliError> {
    match ds {
        AnyDataset::F32(d) => store_as(d, prefix, interleaved),
        AnyDataset::F64(d) => store_as(d, prefix, interleaved),
    }
}
