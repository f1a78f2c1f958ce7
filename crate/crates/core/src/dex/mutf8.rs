/// Decodes a NUL-terminated MUTF-8 string starting at `bytes[0]`.
///
/// Returns the decoded string, the number of bytes consumed (excluding the
/// terminator) and whether any replacement was needed. Running off the end
/// of `bytes` without a terminator counts as a repair.
pub fn decode(bytes: &[u8]) -> (String, usize, bool) {
    let mut units: Vec<u16> = Vec::new();
    let mut repaired = false;
    let mut i = 0;
    loop {
        let Some(&b0) = bytes.get(i) else {
            repaired = true;
            break;
        };
        if b0 == 0 {
            break;
        }
        if b0 < 0x80 {
            units.push(b0 as u16);
            i += 1;
        } else if b0 & 0xE0 == 0xC0 {
            match bytes.get(i + 1) {
                Some(&b1) if b1 & 0xC0 == 0x80 => {
                    units.push((((b0 & 0x1F) as u16) << 6) | (b1 & 0x3F) as u16);
                    i += 2;
                }
                _ => {
                    units.push(0xFFFD);
                    repaired = true;
                    i += 1;
                }
            }
        } else if b0 & 0xF0 == 0xE0 {
            match (bytes.get(i + 1), bytes.get(i + 2)) {
                (Some(&b1), Some(&b2)) if b1 & 0xC0 == 0x80 && b2 & 0xC0 == 0x80 => {
                    units.push(
                        (((b0 & 0x0F) as u16) << 12) | (((b1 & 0x3F) as u16) << 6) | (b2 & 0x3F) as u16,
                    );
                    i += 3;
                }
                _ => {
                    units.push(0xFFFD);
                    repaired = true;
                    i += 1;
                }
            }
        } else {
            units.push(0xFFFD);
            repaired = true;
            i += 1;
        }
    }
    // Surrogate pairs are encoded as two 3-byte sequences; lone halves are invalid.
    let text = match String::from_utf16(&units) {
        Ok(s) => s,
        Err(_) => {
            repaired = true;
            String::from_utf16_lossy(&units)
        }
    };
    (text, i, repaired)
}

#[cfg(test)]
mod tests {
    use super::decode;

    #[test]
    fn ascii() {
        assert_eq!(decode(b"MD5\0rest"), ("MD5".to_string(), 3, false));
    }

    #[test]
    fn embedded_nul_and_two_byte() {
        // "a\u{0}é"
        let (s, n, bad) = decode(&[b'a', 0xC0, 0x80, 0xC3, 0xA9, 0]);
        assert_eq!(s, "a\u{0}é");
        assert_eq!(n, 5);
        assert!(!bad);
    }

    #[test]
    fn surrogate_pair() {
        // U+1F600 as CESU-8: D83D DE00
        let (s, _, bad) = decode(&[0xED, 0xA0, 0xBD, 0xED, 0xB8, 0x80, 0]);
        assert_eq!(s, "\u{1F600}");
        assert!(!bad);
    }

    #[test]
    fn invalid_bytes_are_replaced() {
        let (s, _, bad) = decode(&[b'x', 0xFF, b'y', 0]);
        assert_eq!(s, "x\u{FFFD}y");
        assert!(bad);
        let (_, _, bad) = decode(&[0xED, 0xA0, 0xBD, 0]);
        assert!(bad, "lone surrogate");
        let (_, _, bad) = decode(b"abc");
        assert!(bad, "missing terminator");
    }
}
