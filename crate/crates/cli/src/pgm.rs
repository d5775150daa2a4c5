//! Binary PGM (P5) images.

/// Gray level of a pixel value in `[0, 1]`.
pub fn gray(v: f64) -> u8 {
    (255.0 * v.clamp(0.0, 1.0)).round() as u8
}

/// Encodes a `width × height` 8-bit image.
pub fn encode(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    assert_eq!(pixels.len(), width * height, "pixel count does not match {width}x{height}");
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

/// Decodes a P5 image written by [`encode`] into `(width, height, pixels)`.
pub fn decode(bytes: &[u8]) -> anyhow::Result<(usize, usize, Vec<u8>)> {
    let mut fields = vec![];
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        anyhow::ensure!(pos > start, "truncated pgm header");
        fields.push(std::str::from_utf8(&bytes[start..pos])?.to_string());
    }
    anyhow::ensure!(fields[0] == "P5", "not a binary pgm");
    anyhow::ensure!(fields[3] == "255", "unsupported maxval {}", fields[3]);
    let (w, h): (usize, usize) = (fields[1].parse()?, fields[2].parse()?);
    let data = &bytes[pos + 1..];
    anyhow::ensure!(data.len() == w * h, "expected {} pixels, found {}", w * h, data.len());
    Ok((w, h, data.to_vec()))
}

/// Tiles rows of square-ish images into one grid. `rows[r][i]` is the pixel
/// vector of image `i` in grid row `r`; every image is `side × side`.
pub fn grid(rows: &[Vec<Vec<f64>>], side: usize) -> (usize, usize, Vec<u8>) {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let (width, height) = (cols * side, rows.len() * side);
    let mut px = vec![0u8; width * height];
    for (r, images) in rows.iter().enumerate() {
        for (c, img) in images.iter().enumerate() {
            for y in 0..side {
                for x in 0..side {
                    px[(r * side + y) * width + c * side + x] = gray(img[y * side + x]);
                }
            }
        }
    }
    (width, height, px)
}
