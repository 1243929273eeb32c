//! Network specifications, one declaration per line:
//!
//! ```text
//! input 100 100 1
//! classes 10575
//! representation Pool5
//! Conv11 conv 3 3 1 1 32 same
//! Relu11 relu
//! Pool1 maxpool 2 2 ceil
//! Pool5 avgpool 7 1
//! Dropout dropout 0.4
//! Fc6 fc 320 10575
//! ```
//!
//! `input` is height, width, channels. Convolutions list filter height and
//! width, stride, input and output channels, then `same` or `valid`. Layer
//! lines appear in forward order; the three header keywords may not be used
//! as layer names.

use std::fmt::Write as _;

use facerep_core::network::LayerSpec;
use facerep_core::{LayerKind, NetworkSpec};

use super::{content_lines, parse_num, ParseError};

pub fn parse_spec(text: &str) -> Result<NetworkSpec, ParseError> {
    let mut input = None;
    let mut classes = None;
    let mut representation = None;
    let mut layers = Vec::new();
    for (n, line) in content_lines(text) {
        let f: Vec<&str> = line.split_whitespace().collect();
        let expect = |k: usize| {
            if f.len() == k {
                Ok(())
            } else {
                Err(ParseError::new(n, format!("expected {k} fields, found {}", f.len())))
            }
        };
        match f[0] {
            "input" => {
                expect(4)?;
                let dims = [
                    parse_num(n, f[1], "height")?,
                    parse_num(n, f[2], "width")?,
                    parse_num(n, f[3], "channels")?,
                ];
                if input.replace(dims).is_some() {
                    return Err(ParseError::new(n, "duplicate input line"));
                }
            }
            "classes" => {
                expect(2)?;
                if classes.replace(parse_num(n, f[1], "class count")?).is_some() {
                    return Err(ParseError::new(n, "duplicate classes line"));
                }
            }
            "representation" => {
                expect(2)?;
                if representation.replace(f[1].to_string()).is_some() {
                    return Err(ParseError::new(n, "duplicate representation line"));
                }
            }
            name => {
                if f.len() < 2 {
                    return Err(ParseError::new(n, format!("layer {name} has no type")));
                }
                let kind = match f[1] {
                    "conv" => {
                        expect(8)?;
                        LayerKind::Convolution {
                            filter_h: parse_num(n, f[2], "filter height")?,
                            filter_w: parse_num(n, f[3], "filter width")?,
                            stride: parse_num(n, f[4], "stride")?,
                            in_channels: parse_num(n, f[5], "input channels")?,
                            out_channels: parse_num(n, f[6], "output channels")?,
                            same_padding: match f[7] {
                                "same" => true,
                                "valid" => false,
                                p => return Err(ParseError::new(n, format!("bad padding {p:?}"))),
                            },
                        }
                    }
                    "maxpool" => {
                        expect(5)?;
                        LayerKind::MaxPool {
                            window: parse_num(n, f[2], "window")?,
                            stride: parse_num(n, f[3], "stride")?,
                            ceil_mode: match f[4] {
                                "ceil" => true,
                                "floor" => false,
                                m => return Err(ParseError::new(n, format!("bad rounding {m:?}"))),
                            },
                        }
                    }
                    "avgpool" => {
                        expect(4)?;
                        LayerKind::AvgPool {
                            window: parse_num(n, f[2], "window")?,
                            stride: parse_num(n, f[3], "stride")?,
                        }
                    }
                    "relu" => {
                        expect(2)?;
                        LayerKind::Relu
                    }
                    "dropout" => {
                        expect(3)?;
                        LayerKind::Dropout {
                            rate: parse_num(n, f[2], "dropout rate")?,
                        }
                    }
                    "fc" => {
                        expect(4)?;
                        LayerKind::FullyConnected {
                            in_dim: parse_num(n, f[2], "input dimension")?,
                            out_dim: parse_num(n, f[3], "output dimension")?,
                        }
                    }
                    t => return Err(ParseError::new(n, format!("unknown layer type {t:?}"))),
                };
                layers.push(LayerSpec::new(name, kind));
            }
        }
    }
    let spec = NetworkSpec {
        input_shape: input.ok_or_else(|| ParseError::new(0, "missing input line"))?,
        layers,
        representation_layer: representation.ok_or_else(|| ParseError::new(0, "missing representation line"))?,
        class_count: classes.ok_or_else(|| ParseError::new(0, "missing classes line"))?,
    };
    spec.validate().map_err(|e| ParseError::new(0, e.to_string()))?;
    Ok(spec)
}

pub fn format_spec(spec: &NetworkSpec) -> String {
    let [h, w, c] = spec.input_shape;
    let mut out = format!(
        "input {h} {w} {c}\nclasses {}\nrepresentation {}\n",
        spec.class_count, spec.representation_layer
    );
    for l in &spec.layers {
        let name = &l.name;
        // Writing to a String cannot fail.
        let _ = match l.kind {
            LayerKind::Convolution {
                filter_h,
                filter_w,
                stride,
                in_channels,
                out_channels,
                same_padding,
            } => {
                let pad = if same_padding { "same" } else { "valid" };
                writeln!(out, "{name} conv {filter_h} {filter_w} {stride} {in_channels} {out_channels} {pad}")
            }
            LayerKind::MaxPool {
                window,
                stride,
                ceil_mode,
            } => {
                let mode = if ceil_mode { "ceil" } else { "floor" };
                writeln!(out, "{name} maxpool {window} {stride} {mode}")
            }
            LayerKind::AvgPool { window, stride } => writeln!(out, "{name} avgpool {window} {stride}"),
            LayerKind::Relu => writeln!(out, "{name} relu"),
            LayerKind::Dropout { rate } => writeln!(out, "{name} dropout {rate}"),
            LayerKind::FullyConnected { in_dim, out_dim } => writeln!(out, "{name} fc {in_dim} {out_dim}"),
        };
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use facerep_core::network::BlockConfig;

    #[test]
    fn canonical_round_trip() {
        let spec = NetworkSpec::canonical();
        let text = format_spec(&spec);
        assert!(text.contains("Conv11 conv 3 3 1 1 32 same\n"));
        assert!(text.contains("Pool1 maxpool 2 2 ceil\n"));
        assert!(text.contains("Fc6 fc 320 10575\n"));
        let back = parse_spec(&text).unwrap();
        assert_eq!(back, spec);
        assert_eq!(format_spec(&back), text);
    }

    #[test]
    fn scaled_round_trip() {
        let cfg = BlockConfig {
            input_side: 25,
            input_channels: 1,
            blocks: vec![(4, 8), (8, 16)],
            class_count: 7,
            dropout_rate: 0.3,
        };
        let spec = NetworkSpec::from_blocks(&cfg).unwrap();
        assert_eq!(parse_spec(&format_spec(&spec)).unwrap(), spec);
    }

    #[test]
    fn errors_name_the_line() {
        let text = "input 4 4 1\nclasses 2\nrepresentation F\n\nF fc 16 3 extra\n";
        assert_eq!(parse_spec(text).unwrap_err().line, 5);
        let text = "input 4 4 1\nclasses 2\nF wobble\n";
        assert_eq!(parse_spec(text).unwrap_err().line, 3);
        assert_eq!(parse_spec("classes 2\n").unwrap_err().line, 0);
    }
}
