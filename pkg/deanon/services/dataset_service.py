import gzip
import hashlib
import logging
import shutil
from pathlib import Path

import httpx
import numpy as np

from .. import deps
from ..errors import ConfigError
from .graph_engine import Graph, graph_stats, read_graph

logger = logging.getLogger(__name__)

# SNAP archive names of the social graphs the attack is usually run on
KNOWN_DATASETS = {
    "epinions": "soc-Epinions1.txt.gz",
    "slashdot": "soc-Slashdot0902.txt.gz",
    "pokec": "soc-pokec-relationships.txt.gz",
    "facebook": "facebook_combined.txt.gz",
    "livejournal": "soc-LiveJournal1.txt.gz",
}


# ===============================
# DIGESTS
# ===============================
def file_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# ===============================
# FETCH HELPER
# ===============================
def dataset_url(name: str) -> str:
    if name.startswith(("http://", "https://")):
        return name
    if name not in KNOWN_DATASETS:
        raise ConfigError(f"unknown dataset {name!r}; known: {sorted(KNOWN_DATASETS)} or a full URL")
    return f"{deps.snap_base().rstrip('/')}/{KNOWN_DATASETS[name]}"


def fetch_dataset(name: str, dest_dir: str | Path | None = None, client: httpx.Client | None = None) -> Path:
    """
    Download a SNAP edge list into the cache and gunzip it. Already
    downloaded files are reused.
    """
    url = dataset_url(name)
    dest_dir = Path(dest_dir) if dest_dir else deps.cache_dir() / "datasets"
    dest_dir.mkdir(parents=True, exist_ok=True)

    archive = dest_dir / url.rsplit("/", 1)[-1]
    target = archive.with_suffix("") if archive.suffix == ".gz" else archive
    if target.exists():
        logger.info("dataset already cached at %s", target)
        return target

    own_client = client is None
    client = client or httpx.Client(timeout=60, follow_redirects=True)
    try:
        with client.stream("GET", url) as r:
            r.raise_for_status()
            partial = archive.with_name(archive.name + ".part")
            with open(partial, "wb") as fh:
                for chunk in r.iter_bytes():
                    fh.write(chunk)
            partial.replace(archive)
    except httpx.HTTPError as exc:
        raise ConfigError(f"failed to fetch {url}: {exc}") from None
    finally:
        if own_client:
            client.close()

    if archive != target:
        with gzip.open(archive, "rb") as src, open(target, "wb") as dst:
            shutil.copyfileobj(src, dst)
        archive.unlink()

    logger.info("fetched %s -> %s", url, target)
    return target


# ===============================
# PARSED-GRAPH CACHE
# ===============================
def load_graph_cached(path: str | Path, use_cache: bool = True) -> tuple[Graph, str]:
    """
    Parse an edge list once per content digest, caching the node and edge
    arrays as .npz. Returns (graph, sha256).
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"input file {path} does not exist")

    digest = file_digest(path)
    cached = deps.cache_dir() / "graphs" / f"{digest}.npz"
    if use_cache and cached.exists():
        with np.load(cached) as data:
            g = Graph.from_edges(data["edges"].tolist(), nodes=data["nodes"].tolist())
        logger.debug("graph cache hit for %s", path)
        return g, digest

    g = read_graph(path)
    logger.info("parsed %s: %s", path, graph_stats(g))
    if use_cache:
        cached.parent.mkdir(parents=True, exist_ok=True)
        tmp = cached.with_suffix(".tmp")
        with open(tmp, "wb") as fh:
            np.savez_compressed(
                fh,
                nodes=np.array(sorted(g.node_ids), dtype=np.int64),
                edges=np.array(g.edges(), dtype=np.int64).reshape(-1, 2),
            )
        tmp.replace(cached)
    return g, digest
