//! Frame dumps: a plain ASCII grid (header `nx nz pitch_m`, then one row of
//! nx values per line) and a 16-bit binary PGM for viewing.

use std::io::{BufRead, Write};

use super::{GridSpec, ImageGrid};
use crate::error::{Error, Result};

pub fn write_ascii_grid<W: Write>(img: &ImageGrid, mut w: W) -> Result<()> {
    let s = &img.spec;
    writeln!(w, "{} {} {:e}", s.nx, s.nz, s.pitch)?;
    for row in img.data.chunks(s.nx) {
        let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    Ok(())
}

pub fn read_ascii_grid<R: BufRead>(r: R) -> Result<ImageGrid> {
    let mut lines = r.lines();
    let header = lines.next().ok_or_else(|| Error::Config {
        line: 1,
        msg: "missing header".into(),
    })??;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let bad = |msg: &str| Error::Config {
        line: 1,
        msg: msg.into(),
    };
    if fields.len() != 3 {
        return Err(bad("header must be `nx nz pitch_m`"));
    }
    let nx: usize = fields[0].parse().map_err(|_| bad("bad nx"))?;
    let nz: usize = fields[1].parse().map_err(|_| bad("bad nz"))?;
    let pitch: f64 = fields[2].parse().map_err(|_| bad("bad pitch"))?;
    let mut data = Vec::with_capacity(nx * nz);
    for (i, line) in lines.enumerate() {
        let line = line?;
        for tok in line.split_whitespace() {
            data.push(tok.parse::<f64>().map_err(|_| Error::Config {
                line: i + 2,
                msg: format!("bad value `{tok}`"),
            })?);
        }
    }
    let spec = GridSpec {
        nx,
        nz,
        pitch,
        origin_x: 0.0,
        origin_z: 0.0,
    };
    ImageGrid::new(spec, data)
}

/// Linearly maps [min, max] onto [0, 65535].
pub fn write_pgm16<W: Write>(img: &ImageGrid, mut w: W) -> Result<()> {
    let (lo, hi) = (img.min(), img.max());
    let span = if hi > lo { hi - lo } else { 1.0 };
    write!(w, "P5\n{} {}\n65535\n", img.spec.nx, img.spec.nz)?;
    let mut bytes = Vec::with_capacity(img.data.len() * 2);
    for &v in &img.data {
        let q = (((v - lo) / span) * 65535.0).round().clamp(0.0, 65535.0) as u16;
        bytes.extend_from_slice(&q.to_be_bytes());
    }
    w.write_all(&bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ascii_roundtrip_is_exact() {
        let spec = GridSpec::square(8, 5.5e-6);
        let img = ImageGrid::from_fn(spec, |x, z| (x * 1e5).sin() + z * 3.3e4 + 1.0 / 3.0);
        let mut buf = Vec::new();
        write_ascii_grid(&img, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("8 8 5.5e-6\n"));
        let back = read_ascii_grid(&buf[..]).unwrap();
        assert_eq!(back.data, img.data);
        assert_eq!(back.spec.pitch, img.spec.pitch);
    }

    #[test]
    fn pgm_header_and_size() {
        let spec = GridSpec::square(4, 1.0);
        let img = ImageGrid::from_fn(spec, |x, _| x);
        let mut buf = Vec::new();
        write_pgm16(&img, &mut buf).unwrap();
        let header = b"P5\n4 4\n65535\n";
        assert_eq!(&buf[..header.len()], header);
        assert_eq!(buf.len(), header.len() + 32);
        // Row minimum maps to 0, row maximum to 65535.
        assert_eq!(&buf[header.len()..header.len() + 2], &[0, 0]);
        assert_eq!(&buf[header.len() + 6..header.len() + 8], &[0xff, 0xff]);
    }

    #[test]
    fn truncated_grid_is_rejected() {
        let text = "2 2 1e-6\n1 2\n3\n";
        assert!(read_ascii_grid(text.as_bytes()).is_err());
    }
}
