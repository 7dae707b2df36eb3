//! Line-delimited JSON traces: one event per line, in trace order.

use std::io::{BufRead, Write};

use tap_core::roles::TraceEvent;

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Encode(#[from] serde_json::Error),
}

pub fn write_trace<W: Write>(mut w: W, trace: &[TraceEvent]) -> Result<(), TraceError> {
    for e in trace {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Blank lines are skipped.
pub fn read_trace<R: BufRead>(r: R) -> Result<Vec<TraceEvent>, TraceError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| TraceError::Parse { line: i + 1, source })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tap_core::keychain::RetrievalMode;
    use tap_core::scenarios;
    use tap_core::sim::run_scenario;

    #[test]
    fn round_trip() {
        let o = run_scenario(&scenarios::honest_ra2(RetrievalMode::Mode3, true)).unwrap();
        let mut buf = Vec::new();
        write_trace(&mut buf, &o.trace).unwrap();
        assert_eq!(buf.iter().filter(|&&b| b == b'\n').count(), o.trace.len());
        assert_eq!(read_trace(buf.as_slice()).unwrap(), o.trace);
    }

    #[test]
    fn reports_the_bad_line() {
        let o = run_scenario(&scenarios::honest_ia(RetrievalMode::Mode1, true)).unwrap();
        let mut buf = Vec::new();
        write_trace(&mut buf, &o.trace[..2]).unwrap();
        buf.extend_from_slice(b"\n{\"time\": 1}\n");
        match read_trace(buf.as_slice()) {
            Err(TraceError::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
    }
}
