//! Newline-delimited predictor protocol.
//!
//! ```text
//! PREDICT <id> <n_bytes>\n<graph file bytes>
//! RESULT <id> <agent_count>\n  followed by one `point <t>` or `dist <mu> <sigma>` line per agent
//! ERROR <id> <message>\n
//! ```

use std::io::{self, BufRead, Write};

use thiserror::Error;

use crate::penalty::AgentEstimate;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("connection closed")]
    Closed,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Response {
    Result { id: u64, estimates: Vec<AgentEstimate> },
    Error { id: u64, message: String },
}

impl Response {
    pub fn id(&self) -> u64 {
        match self {
            Response::Result { id, .. } | Response::Error { id, .. } => *id,
        }
    }
}

/// Decimal rendering with 9 significant digits.
pub fn fmt_sig9(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{:.8}", if v == 0.0 { 0.0 } else { v });
    }
    let magnitude = v.abs().log10().floor() as i32;
    let decimals = (8 - magnitude).max(0) as usize;
    let s = format!("{v:.decimals$}");
    // rounding can carry into a new digit (9.999999999 -> 10.00000000)
    let digits = s.bytes().filter(u8::is_ascii_digit).skip_while(|&b| b == b'0').count();
    if digits > 9 && decimals > 0 {
        format!("{v:.prec$}", prec = decimals - 1)
    } else {
        s
    }
}

pub fn write_request(w: &mut impl Write, id: u64, graph: &str) -> io::Result<()> {
    write!(w, "PREDICT {id} {}\n", graph.len())?;
    w.write_all(graph.as_bytes())?;
    w.flush()
}

/// Reads one request; `Ok(None)` on clean end of stream.
pub fn read_request(r: &mut impl BufRead) -> Result<Option<(u64, String)>, ProtocolError> {
    let mut header = String::new();
    if r.read_line(&mut header)? == 0 {
        return Ok(None);
    }
    let tok: Vec<&str> = header.split_whitespace().collect();
    let (id, n) = match tok.as_slice() {
        ["PREDICT", id, n] => (
            id.parse::<u64>().map_err(|_| malformed(&header))?,
            n.parse::<usize>().map_err(|_| malformed(&header))?,
        ),
        _ => return Err(malformed(&header)),
    };
    let mut body = vec![0u8; n];
    r.read_exact(&mut body)?;
    let graph = String::from_utf8(body).map_err(|_| ProtocolError::Malformed(format!("request {id}: body is not UTF-8")))?;
    Ok(Some((id, graph)))
}

pub fn write_response(w: &mut impl Write, response: &Response) -> io::Result<()> {
    match response {
        Response::Result { id, estimates } => {
            write!(w, "RESULT {id} {}\n", estimates.len())?;
            for e in estimates {
                match *e {
                    AgentEstimate::Point(t) => write!(w, "point {}\n", fmt_sig9(t))?,
                    AgentEstimate::LogNormal { mu, sigma } => {
                        write!(w, "dist {} {}\n", fmt_sig9(mu), fmt_sig9(sigma))?
                    }
                }
            }
        }
        Response::Error { id, message } => {
            write!(w, "ERROR {id} {}\n", message.replace('\n', " "))?;
        }
    }
    w.flush()
}

pub fn read_response(r: &mut impl BufRead) -> Result<Response, ProtocolError> {
    let mut header = String::new();
    if r.read_line(&mut header)? == 0 {
        return Err(ProtocolError::Closed);
    }
    let line = header.trim_end();
    if let Some(rest) = line.strip_prefix("ERROR ") {
        let (id, message) = rest.split_once(' ').unwrap_or((rest, ""));
        let id = id.parse().map_err(|_| malformed(line))?;
        return Ok(Response::Error {
            id,
            message: message.to_string(),
        });
    }
    let tok: Vec<&str> = line.split_whitespace().collect();
    let (id, count) = match tok.as_slice() {
        ["RESULT", id, n] => (
            id.parse::<u64>().map_err(|_| malformed(line))?,
            n.parse::<usize>().map_err(|_| malformed(line))?,
        ),
        _ => return Err(malformed(line)),
    };
    let mut estimates = Vec::with_capacity(count);
    for _ in 0..count {
        let mut l = String::new();
        if r.read_line(&mut l)? == 0 {
            return Err(ProtocolError::Malformed(format!("result {id} truncated")));
        }
        let tok: Vec<&str> = l.split_whitespace().collect();
        let num = |s: &str| s.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| malformed(&l));
        let e = match tok.as_slice() {
            ["point", t] => AgentEstimate::Point(num(t)?),
            ["dist", mu, sigma] => AgentEstimate::LogNormal {
                mu: num(mu)?,
                sigma: num(sigma)?,
            },
            _ => return Err(malformed(&l)),
        };
        estimates.push(e);
    }
    Ok(Response::Result { id, estimates })
}

fn malformed(line: &str) -> ProtocolError {
    ProtocolError::Malformed(format!("{:?}", line.trim_end()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(fmt_sig9(123.456), "123.456000");
        assert_eq!(fmt_sig9(0.001234), "0.00123400000");
        assert_eq!(fmt_sig9(-4.5), "-4.50000000");
        assert_eq!(fmt_sig9(9.9999999999), "10.0000000");
        assert_eq!(fmt_sig9(0.0), "0.00000000");
        assert_eq!(fmt_sig9(1234567890.0), "1234567890");
    }

    #[test]
    fn request_round_trip() {
        let mut buf = Vec::new();
        write_request(&mut buf, 7, "adgv1\nend\n").unwrap();
        assert!(buf.starts_with(b"PREDICT 7 10\n"));
        write_request(&mut buf, 8, "é").unwrap();
        let mut r = Cursor::new(buf);
        assert_eq!(read_request(&mut r).unwrap(), Some((7, "adgv1\nend\n".into())));
        assert_eq!(read_request(&mut r).unwrap(), Some((8, "é".into())));
        assert_eq!(read_request(&mut r).unwrap(), None);
    }

    #[test]
    fn response_round_trip() {
        let resp = [
            Response::Result {
                id: 3,
                estimates: vec![AgentEstimate::Point(12.5), AgentEstimate::LogNormal { mu: 4.25, sigma: 0.125 }],
            },
            Response::Error {
                id: 4,
                message: "feature dim mismatch".into(),
            },
        ];
        let mut buf = Vec::new();
        for r in &resp {
            write_response(&mut buf, r).unwrap();
        }
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "RESULT 3 2\npoint 12.5000000\ndist 4.25000000 0.125000000\nERROR 4 feature dim mismatch\n"
        );
        let mut r = Cursor::new(buf);
        assert_eq!(read_response(&mut r).unwrap(), resp[0]);
        assert_eq!(read_response(&mut r).unwrap(), resp[1]);
        assert!(matches!(read_response(&mut r), Err(ProtocolError::Closed)));
    }

    #[test]
    fn malformed_lines() {
        for bad in ["RESULT x 1\n", "RESULT 1 1\nmaybe 3\n", "HELLO\n", "RESULT 1 2\npoint 1\n"] {
            assert!(read_response(&mut Cursor::new(bad)).is_err(), "{bad:?}");
        }
        assert!(read_request(&mut Cursor::new("PREDICT 1\n")).is_err());
        assert!(read_request(&mut Cursor::new("PREDICT 1 50\nshort")).is_err());
    }
}
