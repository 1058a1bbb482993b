//! Predictors that run as a child process.
//!
//! The child reads one JSON request line on stdin, after which stdin is
//! closed:
//!
//! ```text
//! {"horizon":H,"num_samples":S,"seed":N,"quant_factor":Q,"context":[t0,t1,...]}
//! ```
//!
//! It then writes `H` lines to stdout, each holding `S` comma-separated
//! tokens, flushing after every line so frames stream as they are made.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdout, Command, Stdio};

use serde::{Deserialize, Serialize};
use tokencast_core::{ForecastRequest, Frame, FramePredictor, FrameStream, PredictError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireRequest {
    pub horizon: usize,
    pub num_samples: usize,
    pub seed: u64,
    pub quant_factor: u32,
    pub context: Vec<u32>,
}

impl From<&ForecastRequest> for WireRequest {
    fn from(req: &ForecastRequest) -> Self {
        Self {
            horizon: req.horizon,
            num_samples: req.num_samples,
            seed: req.seed,
            quant_factor: req.quant_factor(),
            context: req.context.tokens.clone(),
        }
    }
}

/// Parses one frame line. Width and range checks happen downstream.
pub fn parse_frame(line: &str) -> Result<Frame, String> {
    line.trim()
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<u32>()
                .map_err(|e| format!("bad token {t:?}: {e}"))
        })
        .collect()
}

pub fn format_frame(frame: &[u32]) -> String {
    let parts: Vec<String> = frame.iter().map(u32::to_string).collect();
    parts.join(",")
}

#[derive(Debug, Clone)]
pub struct SubprocessPredictor {
    command: Vec<String>,
}

impl SubprocessPredictor {
    /// `command[0]` is the program, the rest its arguments.
    pub fn new(command: Vec<String>) -> Self {
        Self { command }
    }
}

impl FramePredictor for SubprocessPredictor {
    fn start(&self, req: &ForecastRequest) -> Result<Box<dyn FrameStream>, PredictError> {
        let (program, args) = self
            .command
            .split_first()
            .ok_or_else(|| PredictError::InvalidParams("empty command".into()))?;
        let fail = |message: String| PredictError::Failed { frame: 0, message };
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| fail(format!("spawning {program}: {e}")))?;
        let mut line = serde_json::to_string(&WireRequest::from(req)).expect("request serializes");
        line.push('\n');
        let mut stdin = child.stdin.take().expect("stdin is piped");
        let written = stdin
            .write_all(line.as_bytes())
            .and_then(|()| stdin.flush());
        drop(stdin);
        if let Err(e) = written {
            let _ = child.kill();
            let _ = child.wait();
            return Err(fail(format!("writing request: {e}")));
        }
        let stdout = BufReader::new(child.stdout.take().expect("stdout is piped"));
        Ok(Box::new(SubprocessStream {
            child,
            stdout,
            horizon: req.horizon,
            next: 0,
        }))
    }
}

struct SubprocessStream {
    child: Child,
    stdout: BufReader<ChildStdout>,
    horizon: usize,
    next: usize,
}

impl FrameStream for SubprocessStream {
    fn next_frame(&mut self) -> Option<Result<Frame, PredictError>> {
        if self.next >= self.horizon {
            return None;
        }
        let frame = self.next;
        let fail = |message: String| PredictError::Failed { frame, message };
        let mut line = String::new();
        let result = match self.stdout.read_line(&mut line) {
            Ok(0) => Err(fail("child closed stdout early".into())),
            Ok(_) => parse_frame(&line).map_err(fail),
            Err(e) => Err(fail(e.to_string())),
        };
        self.next += 1;
        if result.is_err() {
            self.next = self.horizon;
        }
        Some(result)
    }
}

impl Drop for SubprocessStream {
    fn drop(&mut self) {
        // a finished child has already exited; a cancelled one is stopped here
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tokencast_core::{encode_unfiltered, predict_all, QuantizationConfig};

    fn request(h: usize) -> ForecastRequest {
        let ctx = encode_unfiltered(&[1.0, 2.0, 3.0, 4.0], &QuantizationConfig::default()).unwrap();
        ForecastRequest::new(ctx, h, 2, 0)
    }

    fn sh(script: &str) -> SubprocessPredictor {
        SubprocessPredictor::new(vec!["sh".into(), "-c".into(), script.into()])
    }

    #[test]
    fn frame_lines() {
        assert_eq!(parse_frame("1, 2,3\n").unwrap(), vec![1, 2, 3]);
        assert!(parse_frame("1,x").is_err());
        assert!(parse_frame("-1").is_err());
        assert_eq!(format_frame(&[7, 0, 10_000]), "7,0,10000");
    }

    #[test]
    fn wire_request_shape() {
        let w = WireRequest::from(&request(3));
        let v: serde_json::Value = serde_json::to_value(&w).unwrap();
        assert_eq!(v["horizon"], 3);
        assert_eq!(v["quant_factor"], 10_000);
        assert_eq!(v["context"].as_array().unwrap().len(), 4);
    }

    #[test]
    fn reads_frames_from_child() {
        let p = sh("read line; for i in 1 2 3; do echo \"$i,$i\"; done");
        let frames = predict_all(&p, &request(3)).unwrap();
        assert_eq!(frames, vec![vec![1, 1], vec![2, 2], vec![3, 3]]);
    }

    #[test]
    fn short_output_is_an_error() {
        let p = sh("read line; echo 5,5");
        let err = predict_all(&p, &request(3)).unwrap_err();
        assert!(matches!(err, PredictError::Failed { frame: 1, .. }));
    }

    #[test]
    fn missing_program() {
        let p = SubprocessPredictor::new(vec!["/nonexistent/predictor".into()]);
        assert!(p.start(&request(1)).is_err());
        assert!(SubprocessPredictor::new(vec![]).start(&request(1)).is_err());
    }
}
