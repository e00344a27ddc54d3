//! Ground-truth fixations and their CSV form (`image_id,subject_id,x,y`).

use std::collections::BTreeMap;

use crate::{Error, Result};

/// One gaze landing. Coordinates are continuous pixels: `x` along columns,
/// `y` along rows, origin at the top-left corner.
#[derive(Debug, Clone, PartialEq)]
pub struct Fixation {
    pub image_id: String,
    pub subject_id: String,
    pub x: f64,
    pub y: f64,
}

impl Fixation {
    pub fn new(image_id: impl Into<String>, subject_id: impl Into<String>, x: f64, y: f64) -> Self {
        Self { image_id: image_id.into(), subject_id: subject_id.into(), x, y }
    }

    /// `(row, col)` of the pixel the fixation falls in.
    #[inline]
    pub fn pixel(&self) -> (usize, usize) {
        (self.y.floor() as usize, self.x.floor() as usize)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FixationSet {
    records: Vec<Fixation>,
}

impl FixationSet {
    pub fn new(records: Vec<Fixation>) -> Self {
        Self { records }
    }

    pub fn records(&self) -> &[Fixation] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn push(&mut self, fixation: Fixation) {
        self.records.push(fixation);
    }

    /// Fixations grouped by image, images in sorted order, records in input order.
    pub fn by_image(&self) -> BTreeMap<&str, Vec<&Fixation>> {
        let mut groups: BTreeMap<&str, Vec<&Fixation>> = BTreeMap::new();
        for f in &self.records {
            groups.entry(f.image_id.as_str()).or_default().push(f);
        }
        groups
    }

    pub fn for_image<'a>(&'a self, image_id: &'a str) -> impl Iterator<Item = &'a Fixation> + 'a {
        self.records.iter().filter(move |f| f.image_id == image_id)
    }

    /// Fixations of one image as pixel indices.
    pub fn pixels_for(&self, image_id: &str) -> Vec<(usize, usize)> {
        self.for_image(image_id).map(Fixation::pixel).collect()
    }

    /// Keeps only records whose image satisfies `keep`.
    pub fn filter_images(&self, keep: impl Fn(&str) -> bool) -> FixationSet {
        FixationSet::new(self.records.iter().filter(|f| keep(&f.image_id)).cloned().collect())
    }
}

/// Parses the fixation CSV. LF and CRLF line endings are accepted; the header
/// must be exactly `image_id,subject_id,x,y`.
pub fn read_fixations(text: &str) -> Result<FixationSet> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| Error::Parse { line: 1, message: e.to_string() })?
        .clone();
    let expected = ["image_id", "subject_id", "x", "y"];
    if header.iter().ne(expected.iter().copied()) {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header {}, got {:?}", expected.join(","), header),
        });
    }
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let coord = |i: usize, name: &str| -> Result<f64> {
            let v: f64 = row[i].parse().map_err(|_| Error::Parse {
                line,
                message: format!("{name} is not a number: {:?}", &row[i]),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse { line, message: format!("{name} is not finite") });
            }
            Ok(v)
        };
        if row.len() != 4 {
            return Err(Error::Parse { line, message: format!("expected 4 fields, got {}", row.len()) });
        }
        if row[0].is_empty() {
            return Err(Error::Parse { line, message: "empty image_id".into() });
        }
        records.push(Fixation::new(&row[0], &row[1], coord(2, "x")?, coord(3, "y")?));
    }
    Ok(FixationSet { records })
}

pub fn write_fixations(set: &FixationSet) -> String {
    let mut out = String::from("image_id,subject_id,x,y\n");
    for f in set.records() {
        out.push_str(&format!("{},{},{:?},{:?}\n", f.image_id, f.subject_id, f.x, f.y));
    }
    out
}

fn relative_index(i: usize, src: usize, dst: usize) -> usize {
    if src <= 1 || dst <= 1 {
        return 0;
    }
    let v = (i as f64 * (dst - 1) as f64 / (src - 1) as f64).round() as usize;
    v.min(dst - 1)
}

/// Maps a pixel between grid shapes by relative position:
/// `round(row · (H_dst − 1) / (H_src − 1))`, likewise for columns.
pub fn map_pixel(
    (row, col): (usize, usize),
    src: (usize, usize),
    dst: (usize, usize),
) -> (usize, usize) {
    (relative_index(row, src.0, dst.0), relative_index(col, src.1, dst.1))
}

/// Scales continuous `(x, y)` coordinates from one image shape to another.
pub fn map_point(x: f64, y: f64, src: (usize, usize), dst: (usize, usize)) -> (f64, f64) {
    (x * dst.1 as f64 / src.1 as f64, y * dst.0 as f64 / src.0 as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_floors() {
        let set = read_fixations("image_id,subject_id,x,y\nimg1,s1,3.2,0.9\n").unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.records()[0].pixel(), (0, 3));
    }

    #[test]
    fn crlf_and_empty_body() {
        let set = read_fixations("image_id,subject_id,x,y\r\na,s,1,2\r\nb,t,0.5,0.5\r\n").unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.records()[1].image_id, "b");
        assert!(read_fixations("image_id,subject_id,x,y\n").unwrap().is_empty());
    }

    #[test]
    fn reports_line_numbers() {
        let err = read_fixations("image_id,subject_id,x,y\na,s,1,2\na,s,oops,2\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err:?}");
        assert!(matches!(
            read_fixations("img,subject,x,y\n"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            read_fixations("image_id,subject_id,x,y\na,s,1\n"),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn csv_round_trip() {
        let set = FixationSet::new(vec![Fixation::new("a", "s1", 0.1, 2.75), Fixation::new("b", "s2", 3.0, 4.5)]);
        assert_eq!(read_fixations(&write_fixations(&set)).unwrap(), set);
    }

    #[test]
    fn relative_mapping() {
        assert_eq!(map_pixel((3, 3), (4, 4), (7, 7)), (6, 6));
        assert_eq!(map_pixel((1, 2), (3, 5), (3, 5)), (1, 2));
        assert_eq!(map_pixel((0, 4), (1, 5), (4, 3)), (0, 2));
        assert_eq!(map_pixel((2, 0), (3, 1), (1, 8)), (0, 0));
    }
}
