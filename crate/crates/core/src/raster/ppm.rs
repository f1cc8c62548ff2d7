//! Binary PPM (`P6`) and PGM (`P5`) codec, maxval 255 only.

use super::{Image, RasterError};

struct Header {
    gray: bool,
    width: usize,
    height: usize,
    data_start: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header, RasterError> {
    let gray = match bytes.get(..2) {
        Some(b"P6") => false,
        Some(b"P5") => true,
        _ => return Err(RasterError::BadMagic),
    };
    let mut pos = 2;
    let mut fields = [0u32; 3];
    for (i, field) in fields.iter_mut().enumerate() {
        // whitespace and `#` comments may precede every header token
        let mut saw_separator = false;
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => {
                    saw_separator = true;
                    pos += 1;
                }
                Some(b'#') => {
                    saw_separator = true;
                    while !matches!(bytes.get(pos), None | Some(b'\n')) {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(RasterError::BadHeader("header ends early".into())),
            }
        }
        if !saw_separator {
            return Err(RasterError::BadHeader(format!("missing separator before field {i}")));
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(RasterError::BadHeader(format!("expected a number at byte {start}")));
        }
        let text = std::str::from_utf8(&bytes[start..pos]).expect("ascii digits");
        *field = text
            .parse()
            .map_err(|_| RasterError::BadHeader(format!("number too large at byte {start}")))?;
    }
    // exactly one whitespace byte separates maxval from the raster
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(RasterError::BadHeader("missing whitespace after maxval".into())),
    }
    let [w, h, maxval] = fields;
    if maxval != 255 {
        return Err(RasterError::UnsupportedMaxval(maxval));
    }
    if w == 0 || h == 0 {
        return Err(RasterError::EmptyImage(w as usize, h as usize));
    }
    Ok(Header {
        gray,
        width: w as usize,
        height: h as usize,
        data_start: pos,
    })
}

/// Decodes a binary PPM or PGM. Grayscale input is promoted to RGB.
pub fn read_ppm(bytes: &[u8]) -> Result<Image, RasterError> {
    let header = parse_header(bytes)?;
    let channels = if header.gray { 1 } else { 3 };
    let expected = header
        .width
        .checked_mul(header.height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| RasterError::BadHeader("dimensions overflow".into()))?;
    let payload = &bytes[header.data_start..];
    if payload.len() < expected {
        return Err(RasterError::TruncatedPayload {
            expected,
            found: payload.len(),
        });
    }
    let payload = &payload[..expected];
    let pixels = if header.gray {
        payload.iter().map(|&v| [v, v, v]).collect()
    } else {
        payload.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect()
    };
    Image::from_pixels(header.width, header.height, pixels)
}

/// Encodes as canonical `P6`: `"P6\n<w> <h>\n255\n"` followed by raw RGB.
pub fn write_ppm(img: &Image) -> Vec<u8> {
    let header = format!("P6\n{} {}\n255\n", img.width(), img.height());
    let mut out = Vec::with_capacity(header.len() + img.pixels().len() * 3);
    out.extend_from_slice(header.as_bytes());
    for p in img.pixels() {
        out.extend_from_slice(p);
    }
    out
}
