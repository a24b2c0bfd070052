//! Plain-text grid format.
//!
//! Line 1: `n,cellsPerAxis...,timeCells,spatialLo...,spatialHi...,timeLo,timeHi`.
//! Then one line per time slice (time outermost), each holding the spatial
//! values of that slice in row-major order. Reals are written with 17
//! significant digits so that a write/read cycle is bit-exact for `f64`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::SpaceTimeBox;
use crate::gridfn::{GridFunction, GridSpec};
use crate::scalar::{to_f64, Scalar};

pub(crate) fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_csv<S: Scalar, W: Write>(f: &GridFunction<S>, mut out: W) -> Result<()> {
    let spec = f.spec();
    let d = spec.domain();
    let mut header: Vec<String> = vec![spec.n().to_string()];
    header.extend(spec.cells_per_axis().iter().map(|c| c.to_string()));
    header.push(spec.time_cells().to_string());
    header.extend(d.spatial_lo.iter().map(|v| fmt_real(to_f64(*v))));
    header.extend(d.spatial_hi.iter().map(|v| fmt_real(to_f64(*v))));
    header.push(fmt_real(to_f64(d.time_lo)));
    header.push(fmt_real(to_f64(d.time_hi)));
    writeln!(out, "{}", header.join(","))?;
    let slice = f.len() / spec.time_cells();
    for row in f.values().chunks(slice) {
        let line: Vec<String> = row.iter().map(|v| fmt_real(to_f64(*v))).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}

pub fn to_csv_string<S: Scalar>(f: &GridFunction<S>) -> String {
    let mut buf = Vec::new();
    write_csv(f, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("ascii output")
}

pub fn write_csv_file<S: Scalar>(f: &GridFunction<S>, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_csv(f, &mut out)?;
    out.flush()?;
    Ok(())
}

fn parse_real<S: Scalar>(tok: &str) -> Result<S> {
    let v: f64 = tok.trim().parse().map_err(|_| Error::Parse(format!("not a real number: {tok:?}")))?;
    S::from_f64(v).ok_or_else(|| Error::Parse(format!("value {v} not representable")))
}

fn parse_count(tok: &str) -> Result<usize> {
    tok.trim().parse().map_err(|_| Error::Parse(format!("not a cell count: {tok:?}")))
}

pub fn read_csv<S: Scalar, R: BufRead>(input: R) -> Result<GridFunction<S>> {
    let mut lines = input.lines();
    let header = loop {
        match lines.next() {
            Some(line) => {
                let line = line?;
                if !line.trim().is_empty() {
                    break line;
                }
            }
            None => return Err(Error::Parse("empty grid file".into())),
        }
    };
    let fields: Vec<&str> = header.split(',').collect();
    let n = parse_count(fields[0])?;
    if n == 0 || fields.len() != 1 + n + 1 + 2 * n + 2 {
        return Err(Error::Parse(format!("header has {} fields, expected {} for n = {n}", fields.len(), 4 + 3 * n)));
    }
    let cells = fields[1..=n].iter().map(|t| parse_count(t)).collect::<Result<Vec<_>>>()?;
    let time_cells = parse_count(fields[n + 1])?;
    let lo = fields[n + 2..2 * n + 2].iter().map(|t| parse_real(t)).collect::<Result<Vec<S>>>()?;
    let hi = fields[2 * n + 2..3 * n + 2].iter().map(|t| parse_real(t)).collect::<Result<Vec<S>>>()?;
    let t_lo = parse_real(fields[3 * n + 2])?;
    let t_hi = parse_real(fields[3 * n + 3])?;
    let spec = GridSpec::new(cells, time_cells, SpaceTimeBox::new(lo, hi, t_lo, t_hi)?)?;

    let mut values = Vec::with_capacity(spec.len());
    for line in lines {
        let line = line?;
        for tok in line.split(',').filter(|t| !t.trim().is_empty()) {
            values.push(parse_real(tok)?);
        }
    }
    if values.len() != spec.len() {
        return Err(Error::Parse(format!("expected {} values, found {}", spec.len(), values.len())));
    }
    GridFunction::new(spec, values)
}

pub fn read_csv_file<S: Scalar>(path: &Path) -> Result<GridFunction<S>> {
    read_csv(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_bit_exact() {
        let spec = GridSpec::new(
            vec![3, 2],
            4,
            SpaceTimeBox::new(vec![-0.1, 0.3], vec![1.7, 2.9], 1.0 / 3.0, 2.0).unwrap(),
        )
        .unwrap();
        let f = GridFunction::from_fn(spec, |x: &[f64], t: f64| (x[0] * 7.1).sin() + (x[1] - t).exp() / 3.0).unwrap();
        let text = to_csv_string(&f);
        let back: GridFunction<f64> = read_csv(text.as_bytes()).unwrap();
        assert_eq!(back, f);
        assert_eq!(to_csv_string(&back), text);
    }

    #[test]
    fn header_layout() {
        let spec = GridSpec::uniform(1, 2, 2, 1.0, 2.0).unwrap();
        let f = GridFunction::constant(spec, 1.0).unwrap();
        let text = to_csv_string(&f);
        let first = text.lines().next().unwrap();
        assert!(first.starts_with("1,2,2,0.0000000000000000e0,1.0000000000000000e0,"));
        assert_eq!(text.lines().count(), 3);
    }

    #[test]
    fn malformed_inputs_rejected() {
        assert!(read_csv::<f64, _>("".as_bytes()).is_err());
        assert!(read_csv::<f64, _>("1,2,2,0,1,0\n1,1\n1,1\n".as_bytes()).is_err());
        assert!(read_csv::<f64, _>("1,2,2,0,1,0,1\n1,1\n1\n".as_bytes()).is_err());
        assert!(read_csv::<f64, _>("1,2,2,0,1,0,1\n1,x\n1,1\n".as_bytes()).is_err());
        assert!(read_csv::<f64, _>("1,2,2,0,1,0,1\n1,1\n1,1\n".as_bytes()).is_ok());
    }
}
