use crate::autodiff::Matrix;
use crate::error::{Error, Result};
use crate::graph::{edge_homophily, node_homophily, Graph};
use std::fs::File;
use std::path::Path;

pub const EDGES_FILE: &str = "edges.tsv";
pub const FEATURES_FILE: &str = "features.csv";
pub const LABELS_FILE: &str = "labels.csv";

fn open(dir: &Path, name: &str) -> Result<File> {
    File::open(dir.join(name)).map_err(|e| Error::ingest(name, None, format!("{}: {e}", dir.join(name).display())))
}

fn line_of(record: &csv::StringRecord) -> Option<usize> {
    record.position().map(|p| p.line() as usize)
}

fn csv_error(file: &str, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize);
    Error::ingest(file, line, e.to_string())
}

/// Reads a dataset directory holding `edges.tsv` (`src<TAB>dst`, 0-based,
/// `#` comments), `features.csv` (row i = node i, no header) and
/// `labels.csv` (`node_id,class` with header, every node exactly once).
///
/// Class values are mapped to dense ids in ascending order, numerically when
/// every value is an integer; the raw values become the class names.
pub fn ingest_dataset(dir: &Path) -> Result<Graph> {
    let features = read_features(dir)?;
    let n = features.rows();
    let (labels, names) = read_labels(dir, n)?;
    let edges = read_edges(dir, n)?;
    let g = Graph::from_edge_list(&edges, n, features, Some(labels))?.with_class_names(names)?;
    log::info!(
        "{}: {} nodes, {} edges, {} classes, H_node {:.4}, H_edge {:.4}",
        dir.display(),
        n,
        g.num_edges(),
        g.num_classes(),
        node_homophily(&g)?,
        edge_homophily(&g)?
    );
    Ok(g)
}

fn read_features(dir: &Path) -> Result<Matrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(open(dir, FEATURES_FILE)?);
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(FEATURES_FILE, e))?;
        let row = record
            .iter()
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| Error::ingest(FEATURES_FILE, line_of(&record), format!("not a number: {s:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::ingest(FEATURES_FILE, None, "no rows"));
    }
    Matrix::from_rows(&rows).map_err(|e| Error::ingest(FEATURES_FILE, None, e.to_string()))
}

fn read_labels(dir: &Path, n: usize) -> Result<(Vec<usize>, Vec<String>)> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(open(dir, LABELS_FILE)?);
    let mut raw: Vec<Option<String>> = vec![None; n];
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(LABELS_FILE, e))?;
        let line = line_of(&record);
        if record.len() != 2 {
            return Err(Error::ingest(LABELS_FILE, line, "expected `node_id,class`"));
        }
        let id: usize = record[0]
            .parse()
            .map_err(|_| Error::ingest(LABELS_FILE, line, format!("bad node id {:?}", &record[0])))?;
        if id >= n {
            return Err(Error::ingest(
                LABELS_FILE,
                line,
                format!("node {id} out of range; {FEATURES_FILE} has {n} rows"),
            ));
        }
        if raw[id].replace(record[1].to_string()).is_some() {
            return Err(Error::ingest(LABELS_FILE, line, format!("node {id} labeled twice")));
        }
        rows += 1;
    }
    if rows != n {
        let missing = raw.iter().position(Option::is_none).unwrap_or(0);
        return Err(Error::ingest(
            LABELS_FILE,
            None,
            format!("{rows} labels for {n} feature rows (node {missing} has none)"),
        ));
    }
    let raw: Vec<String> = raw.into_iter().map(|r| r.expect("checked")).collect();
    let mut names: Vec<String> = raw.clone();
    names.sort_unstable();
    names.dedup();
    if names.iter().all(|s| s.parse::<i64>().is_ok()) {
        names.sort_by_key(|s| s.parse::<i64>().expect("checked"));
    }
    let labels = raw
        .iter()
        .map(|s| names.iter().position(|x| x == s).expect("present"))
        .collect();
    Ok((labels, names))
}

fn read_edges(dir: &Path, n: usize) -> Result<Vec<(usize, usize)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .delimiter(b'\t')
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(open(dir, EDGES_FILE)?);
    let mut edges = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(EDGES_FILE, e))?;
        let line = line_of(&record);
        if record.iter().all(str::is_empty) {
            continue;
        }
        if record.len() != 2 {
            return Err(Error::ingest(EDGES_FILE, line, "expected `src<TAB>dst`"));
        }
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::ingest(EDGES_FILE, line, format!("bad node id {s:?}")))
        };
        let (u, v) = (parse(&record[0])?, parse(&record[1])?);
        if u >= n || v >= n {
            return Err(Error::ingest(
                EDGES_FILE,
                line,
                format!("endpoint ({u}, {v}) out of range for {n} nodes"),
            ));
        }
        edges.push((u, v));
    }
    Ok(edges)
}

/// Writes `g` in the format read by [`ingest_dataset`].
pub fn write_dataset(dir: &Path, g: &Graph) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut edges = String::from("# src\tdst\n");
    for (u, v) in g.to_edge_list() {
        edges.push_str(&format!("{u}\t{v}\n"));
    }
    std::fs::write(dir.join(EDGES_FILE), edges)?;

    let mut w = csv::Writer::from_path(dir.join(FEATURES_FILE)).map_err(|e| csv_error(FEATURES_FILE, e))?;
    for i in 0..g.num_nodes() {
        w.write_record(g.features().row(i).iter().map(|x| x.to_string()))
            .map_err(|e| csv_error(FEATURES_FILE, e))?;
    }
    w.flush()?;

    let labels = g.labels()?;
    let mut w = csv::Writer::from_path(dir.join(LABELS_FILE)).map_err(|e| csv_error(LABELS_FILE, e))?;
    w.write_record(["node_id", "class"]).map_err(|e| csv_error(LABELS_FILE, e))?;
    for (i, &c) in labels.iter().enumerate() {
        w.write_record([i.to_string(), g.class_names()[c].clone()])
            .map_err(|e| csv_error(LABELS_FILE, e))?;
    }
    w.flush()?;
    Ok(())
}
