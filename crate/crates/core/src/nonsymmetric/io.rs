//! Cohort files.
//!
//! Binary layout (little endian):
//!
//! ```text
//! magic    8 bytes  "LPHTCOH1"
//! T        u32
//! n        u64
//! epsilon  f64
//! n records of: ceil(T/8) pattern bytes, then one signal byte (0x01 = +1, 0xFF = -1)
//! ```
//!
//! The CSV export has columns `user_id,y,pattern_hex`.

use std::io::{BufRead, Read, Write};

use super::{Cohort, NonSymUser, SignPattern};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"LPHTCOH1";

pub fn write_cohort<W: Write>(out: &mut W, cohort: &Cohort) -> Result<()> {
    let t = u32::try_from(cohort.t).map_err(|_| Error::InvalidParameter("T does not fit in u32".into()))?;
    out.write_all(MAGIC)?;
    out.write_all(&t.to_le_bytes())?;
    out.write_all(&(cohort.users.len() as u64).to_le_bytes())?;
    out.write_all(&cohort.epsilon.to_le_bytes())?;
    for u in &cohort.users {
        if u.domain_size() != cohort.t {
            return Err(Error::DimensionMismatch {
                expected: cohort.t,
                found: u.domain_size(),
            });
        }
        out.write_all(&u.pattern.to_bytes())?;
        out.write_all(&[u.y as u8])?;
    }
    Ok(())
}

pub fn read_cohort<R: Read>(mut input: R) -> Result<Cohort> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Parse("not a cohort file (bad magic)".into()));
    }
    let mut b4 = [0u8; 4];
    let mut b8 = [0u8; 8];
    input.read_exact(&mut b4)?;
    let t = u32::from_le_bytes(b4) as usize;
    input.read_exact(&mut b8)?;
    let n = u64::from_le_bytes(b8);
    input.read_exact(&mut b8)?;
    let epsilon = f64::from_le_bytes(b8);
    let mut record = vec![0u8; t.div_ceil(8) + 1];
    let mut users = Vec::with_capacity(n.min(1 << 24) as usize);
    for i in 0..n {
        input
            .read_exact(&mut record)
            .map_err(|e| Error::Parse(format!("truncated cohort at user {i}: {e}")))?;
        let (bits, y) = record.split_at(record.len() - 1);
        let y = match y[0] {
            0x01 => 1,
            0xFF => -1,
            other => return Err(Error::Parse(format!("user {i}: bad signal byte {other:#04x}"))),
        };
        users.push(NonSymUser::new(SignPattern::from_bytes(bits, t)?, y)?);
    }
    let mut rest = [0u8; 1];
    if input.read(&mut rest)? != 0 {
        return Err(Error::Parse("trailing bytes after the last record".into()));
    }
    Ok(Cohort { t, epsilon, users })
}

pub fn write_cohort_csv<W: Write>(out: &mut W, cohort: &Cohort) -> Result<()> {
    writeln!(out, "user_id,y,pattern_hex")?;
    for (i, u) in cohort.users.iter().enumerate() {
        writeln!(out, "{i},{},{}", u.y, u.pattern.to_hex())?;
    }
    Ok(())
}

/// Reads the CSV export. The CSV does not carry `T` or epsilon.
pub fn read_cohort_csv<R: BufRead>(input: R, t: usize, epsilon: f64) -> Result<Cohort> {
    let mut users = Vec::new();
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || (lineno == 0 && line.starts_with("user_id")) {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::Parse(format!("line {}: expected 3 fields", lineno + 1)));
        }
        let y: i8 = fields[1]
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("line {}: bad y", lineno + 1)))?;
        users.push(NonSymUser::new(SignPattern::from_hex(fields[2].trim(), t)?, y)?);
    }
    Ok(Cohort { t, epsilon, users })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonsymmetric::{simulate_cohort, NonSymmetricMechanism};
    use crate::prob::ProbVector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> Cohort {
        let m = NonSymmetricMechanism::new(0.5).unwrap();
        simulate_cohort(&ProbVector::uniform(11), 25, &m, &mut ChaCha8Rng::seed_from_u64(9)).unwrap()
    }

    #[test]
    fn binary_roundtrip() {
        let c = sample();
        let mut buf = Vec::new();
        write_cohort(&mut buf, &c).unwrap();
        assert_eq!(buf.len(), 8 + 4 + 8 + 8 + 25 * (2 + 1));
        assert_eq!(read_cohort(&buf[..]).unwrap(), c);
    }

    #[test]
    fn binary_rejects_corruption() {
        let c = sample();
        let mut buf = Vec::new();
        write_cohort(&mut buf, &c).unwrap();
        assert!(read_cohort(&buf[..buf.len() - 1]).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_cohort(&bad[..]).is_err());
        let mut bad = buf.clone();
        let last = bad.len() - 1;
        bad[last] = 0;
        assert!(read_cohort(&bad[..]).is_err());
        let mut long = buf;
        long.push(0);
        assert!(read_cohort(&long[..]).is_err());
    }

    #[test]
    fn empty_cohort_has_header() {
        let c = Cohort {
            t: 3,
            epsilon: 1.0,
            users: vec![],
        };
        let mut buf = Vec::new();
        write_cohort(&mut buf, &c).unwrap();
        assert_eq!(buf.len(), 28);
        assert_eq!(read_cohort(&buf[..]).unwrap(), c);
    }

    #[test]
    fn csv_roundtrip() {
        let c = sample();
        let mut buf = Vec::new();
        write_cohort_csv(&mut buf, &c).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("user_id,y,pattern_hex\n0,"));
        assert_eq!(read_cohort_csv(&buf[..], 11, 0.5).unwrap(), c);
    }
}
