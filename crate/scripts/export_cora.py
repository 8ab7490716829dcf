"""Export the Cora citation graph into the tokenwalk dataset directory layout.

The LINQS Cora tables ship inside the `graphdatascience` wheel as parquet
files. This script reads them straight from a downloaded wheel and writes
edges.tsv / features.csv / labels.csv with nodes numbered in table order.

    pip download --no-deps graphdatascience -d /tmp/gds
    python scripts/export_cora.py /tmp/gds/graphdatascience-*.whl data/cora
"""

import io
import sys
import zipfile
from pathlib import Path

import pandas as pd


def main(wheel: str, out_dir: str) -> None:
    z = zipfile.ZipFile(wheel)
    base = "graphdatascience/resources/cora/"
    nodes = pd.read_parquet(io.BytesIO(z.read(base + "cora_nodes.parquet.gzip")))
    rels = pd.read_parquet(io.BytesIO(z.read(base + "cora_rels.parquet.gzip")))

    index = {int(pid): i for i, pid in enumerate(nodes["nodeId"])}
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    with open(out / "edges.tsv", "w") as f:
        f.write("# Cora citation graph (LINQS), undirected view of cora.cites\n")
        for s, t in zip(rels["sourceNodeId"], rels["targetNodeId"]):
            f.write(f"{index[int(s)]}\t{index[int(t)]}\n")
    with open(out / "features.csv", "w") as f:
        for feats in nodes["features"]:
            f.write(",".join(str(int(x)) for x in feats) + "\n")
    with open(out / "labels.csv", "w") as f:
        for y in nodes["subject"]:
            f.write(f"{int(y)}\n")


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
