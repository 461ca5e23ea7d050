//! Time-series CSV and summary JSON writers.

use std::io::Write;

use serde::Serialize;

use super::run::RunRecord;
use crate::error::Result;

/// Column order of [`write_timeseries_csv`].
pub const CSV_HEADER: &str = "t,x,z,w,vx,vz,vw,dx_trap,dz_trap,domega_x_sq,\
x_hat,z_hat,w_hat,w_z_hat,x_raw,z_raw,w_raw,\
cmd_x,cmd_z,cmd_64,cmd_90,applied_x,applied_z,applied_64,applied_90,degenerate,feedback_active";

pub fn write_timeseries_csv<W: Write>(rec: &RunRecord, mut w: W) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for s in &rec.samples {
        let st = &s.state;
        let m = &s.measurement;
        let r = &s.raw;
        let mut fields: Vec<String> = [
            s.t,
            st.x,
            st.z,
            st.w,
            st.vx,
            st.vz,
            st.vw,
            st.trap.dx_trap,
            st.trap.dz_trap,
            st.trap.domega_x_sq,
            m.x_hat,
            m.z_hat,
            m.w_hat,
            m.w_z_hat,
            r.x_hat,
            r.z_hat,
            r.w_hat,
        ]
        .iter()
        .chain(s.command.to_array().iter())
        .chain(s.applied.to_array().iter())
        .map(|v| format!("{v:e}"))
        .collect();
        fields.push(u8::from(s.degenerate).to_string());
        fields.push(u8::from(s.feedback_active).to_string());
        writeln!(w, "{}", fields.join(","))?;
    }
    Ok(())
}

/// Pretty JSON followed by a newline.
pub fn write_json<W: Write, T: Serialize>(value: &T, mut w: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    Ok(())
}
