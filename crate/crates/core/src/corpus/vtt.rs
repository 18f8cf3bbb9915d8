use super::{CaptionCue, CorpusError};

fn malformed(msg: impl Into<String>) -> CorpusError {
    CorpusError::MalformedVtt(msg.into())
}

/// Parses `[H…:]MM:SS.mmm` into seconds.
pub(crate) fn parse_timestamp(s: &str) -> Option<f64> {
    let (hms, ms) = s.split_once('.')?;
    if ms.len() != 3 || !ms.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let parts: Vec<&str> = hms.split(':').collect();
    let (h, m, sec) = match parts.as_slice() {
        [m, s] => ("0", *m, *s),
        [h, m, s] if !h.is_empty() => (*h, *m, *s),
        _ => return None,
    };
    let two = |x: &str| x.len() == 2 && x.bytes().all(|b| b.is_ascii_digit());
    if !two(m) || !two(sec) || !h.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let (h, m, sec, ms): (u64, u64, u64, u64) = (h.parse().ok()?, m.parse().ok()?, sec.parse().ok()?, ms.parse().ok()?);
    if m >= 60 || sec >= 60 {
        return None;
    }
    Some(((h * 3600 + m * 60 + sec) * 1000 + ms) as f64 / 1000.0)
}

/// Removes `<…>` tags, decodes the common character references and
/// collapses whitespace.
fn clean_text(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut in_tag = false;
    for ch in raw.chars() {
        match ch {
            '<' => in_tag = true,
            '>' if in_tag => in_tag = false,
            _ if !in_tag => out.push(ch),
            _ => {}
        }
    }
    let out = out
        .replace("&lt;", "<")
        .replace("&gt;", ">")
        .replace("&nbsp;", " ")
        .replace("&lrm;", "")
        .replace("&rlm;", "")
        .replace("&amp;", "&");
    out.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn is_header(line: &str) -> bool {
    line == "WEBVTT" || line.starts_with("WEBVTT ") || line.starts_with("WEBVTT\t")
}

/// Parses a WebVTT file into cues. Cue settings, identifiers, NOTE/STYLE/
/// REGION blocks and inline markup are discarded; cues whose text is empty
/// after stripping are skipped.
pub fn parse_vtt(raw: &[u8]) -> Result<Vec<CaptionCue>, CorpusError> {
    let text = std::str::from_utf8(raw).map_err(|e| malformed(format!("not UTF-8: {e}")))?;
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let lines: Vec<&str> = text.lines().map(|l| l.trim_end_matches('\r')).collect();

    let first = lines.iter().position(|l| !l.trim().is_empty());
    match first {
        None => return Err(malformed("missing WEBVTT header")),
        Some(i) if !is_header(lines[i]) => {
            return Err(if lines.iter().any(|l| is_header(l)) {
                malformed("text before header")
            } else {
                malformed("missing WEBVTT header")
            })
        }
        _ => {}
    }
    // the header block runs to the first blank line
    let mut i = first.unwrap();
    while i < lines.len() && !lines[i].trim().is_empty() {
        i += 1;
    }

    let mut cues = Vec::new();
    while i < lines.len() {
        if lines[i].trim().is_empty() {
            i += 1;
            continue;
        }
        let start = i;
        while i < lines.len() && !lines[i].trim().is_empty() {
            i += 1;
        }
        let block = &lines[start..i];
        let head = block[0].trim_start();
        if head.starts_with("NOTE") || head == "STYLE" || head == "REGION" {
            continue;
        }
        let Some(t) = block.iter().position(|l| l.contains("-->")) else {
            return Err(malformed(format!("block at line {} has no timing line", start + 1)));
        };
        if t > 1 {
            return Err(malformed(format!("unexpected text before timing at line {}", start + 1)));
        }
        let (a, b) = block[t].split_once("-->").unwrap();
        let begin = parse_timestamp(a.trim()).ok_or_else(|| malformed(format!("bad timestamp {:?}", a.trim())))?;
        let end_tok = b.split_whitespace().next().unwrap_or("");
        let end = parse_timestamp(end_tok).ok_or_else(|| malformed(format!("bad timestamp {end_tok:?}")))?;
        let body = clean_text(&block[t + 1..].join(" "));
        if !body.is_empty() {
            cues.push(CaptionCue::new(begin, end, body));
        }
    }
    Ok(cues)
}

/// Normalizes cue timing: at most one out-of-order cue is put back in
/// place, zero-duration cues are dropped and overlapping ends are clamped to
/// the next cue's start.
pub fn repair_cues(mut cues: Vec<CaptionCue>) -> Result<Vec<CaptionCue>, CorpusError> {
    if let Some(c) = cues.iter().find(|c| c.end < c.start) {
        return Err(CorpusError::UnfixableTimestamps(format!("cue ends at {} before it starts at {}", c.end, c.start)));
    }
    let mut inversions = 0usize;
    for i in 0..cues.len() {
        for j in i + 1..cues.len() {
            if cues[i].start > cues[j].start {
                inversions += 1;
            }
        }
        if inversions > 1 {
            return Err(CorpusError::UnfixableTimestamps("cue starts out of order".into()));
        }
    }
    cues.sort_by(|a, b| a.start.total_cmp(&b.start));
    cues.retain(|c| c.end > c.start);
    for i in 0..cues.len().saturating_sub(1) {
        let next = cues[i + 1].start;
        if cues[i].end > next {
            cues[i].end = next;
        }
    }
    cues.retain(|c| c.end > c.start);
    Ok(cues)
}
