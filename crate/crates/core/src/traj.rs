//! Timestamped pose sequences and their `t_ms,x_mm,y_mm,z_mm,qw,qx,qy,qz`
//! CSV form, shared by ground truth and pointer output.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{UnitQuat, Vec3};

pub const CSV_HEADER: &str = "t_ms,x_mm,y_mm,z_mm,qw,qx,qy,qz";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseSample {
    pub t_ms: u32,
    /// mm
    pub position: Vec3,
    pub orientation: UnitQuat,
}

pub fn write_csv(samples: &[PoseSample]) -> String {
    let mut out = String::with_capacity(64 * (samples.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for s in samples {
        let p = s.position;
        let q = s.orientation;
        writeln!(
            out,
            "{},{:.6},{:.6},{:.6},{:.9},{:.9},{:.9},{:.9}",
            s.t_ms,
            p.x,
            p.y,
            p.z,
            q.w(),
            q.x(),
            q.y(),
            q.z()
        )
        .expect("writing to a String");
    }
    out
}

pub fn read_csv(text: &str) -> Result<Vec<PoseSample>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == CSV_HEADER => {}
        Some((i, h)) => {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("expected header {CSV_HEADER:?}, got {:?}", h.trim()),
            })
        }
        None => return Err(Error::Empty),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        let bad = |message: String| Error::Parse {
            line: i + 1,
            message,
        };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 8 {
            return Err(bad(format!("expected 8 fields, got {}", fields.len())));
        }
        let t_ms: u32 = fields[0]
            .parse()
            .map_err(|_| bad(format!("bad t_ms {:?}", fields[0])))?;
        let mut v = [0.0; 7];
        for (slot, f) in v.iter_mut().zip(&fields[1..]) {
            *slot = f
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| bad(format!("bad number {f:?}")))?;
        }
        let orientation = UnitQuat::from_components(v[3], v[4], v[5], v[6])
            .map_err(|e| bad(e.to_string()))?;
        out.push(PoseSample {
            t_ms,
            position: Vec3::new(v[0], v[1], v[2]),
            orientation,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let q = UnitQuat::from_axis_angle(Vec3::new(1.0, 2.0, 3.0), 33.0).unwrap();
        let s = vec![
            PoseSample {
                t_ms: 0,
                position: Vec3::ZERO,
                orientation: UnitQuat::IDENTITY,
            },
            PoseSample {
                t_ms: 20,
                position: Vec3::new(1.25, -3.5, 0.125),
                orientation: q,
            },
        ];
        let text = write_csv(&s);
        assert!(text.starts_with("t_ms,x_mm,y_mm,z_mm,qw,qx,qy,qz\n0,0.000000,"));
        let back = read_csv(&text).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[1].position, s[1].position);
        assert!(back[1].orientation.angle_to(q) < 1e-6);
    }

    #[test]
    fn csv_errors() {
        assert_eq!(read_csv(""), Err(Error::Empty));
        assert!(matches!(read_csv("a,b\n"), Err(Error::Parse { line: 1, .. })));
        let bad = format!("{CSV_HEADER}\n0,1,2,3,1,0,0\n");
        assert!(matches!(read_csv(&bad), Err(Error::Parse { line: 2, .. })));
        let zero_q = format!("{CSV_HEADER}\n0,1,2,3,0,0,0,0\n");
        assert!(read_csv(&zero_q).is_err());
    }
}
