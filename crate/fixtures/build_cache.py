#!/usr/bin/env python3
"""Regenerates the offline fetch cache and the dataset tables in this directory.

Cache layout: one file per URL named by the hex SHA-256 of the URL, holding the
raw response body, plus a `<name>.meta.json` sidecar with url, content type and
status. Output is deterministic; rerunning produces identical bytes.
"""

import csv
import hashlib
import json
import random
import shutil
from pathlib import Path

HERE = Path(__file__).resolve().parent
CACHE = HERE / "cache"
BASE = "https://incidents.example.org"

CLUSTERS = {
    "a": ["ransomware", "encryption", "backup", "extortion", "payload"],
    "b": ["phishing", "credential", "mailbox", "spoofing", "domain"],
}
DOCS_PER_CLUSTER = 20
TOKENS_PER_DOC = 50

SUPPLY_CHAIN_TITLES = {
    "harbor-advisory": ("Harbor Git Server 4.2.1 patches runner command injection", "2024-03-12"),
    "build-tool-backdoor": ("Backdoored build tool update", "2020-12-13"),
    "typosquat-packages": ("Typosquatted packages steal environment variables", "2022-08-02"),
    "ci-secret-leak": ("CI provider rotates customer secrets", "2023-01-04"),
    "dependency-confusion": ("Dependency confusion", "2021-02-09"),
    "code-coverage-uploader": ("Modified code coverage uploader", "2021-04-15"),
    "git-hosting-oauth": ("Stolen OAuth tokens", "2022-04-15"),
    "ransomware-msp": ("Ransomware through remote management software", "2021-07-02"),
    "container-image": ("Poisoned container images", "2020-11-20"),
    "build-log-secrets": ("Build logs exposed cloud keys", ""),
    "signing-key": ("Compromised code signing certificate", "2022-03-01"),
    "browser-extension": ("Hijacked browser extension", "2017-08-02"),
}


def put(url, body, content_type):
    key = hashlib.sha256(url.encode()).hexdigest()
    (CACHE / key).write_bytes(body)
    meta = {"url": url, "content_type": content_type, "status": 200}
    (CACHE / f"{key}.meta.json").write_text(json.dumps(meta, indent=2) + "\n")


def write_table(name, header, rows):
    with open(HERE / f"{name}.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\r\n")
        w.writerow(header)
        w.writerows(rows)


def main():
    shutil.rmtree(CACHE, ignore_errors=True)
    CACHE.mkdir()

    rng = random.Random(20240312)
    rows = []
    for cluster, vocab in CLUSTERS.items():
        for i in range(DOCS_PER_CLUSTER):
            url = f"{BASE}/two-cluster/{cluster}{i:02d}"
            text = " ".join(rng.choice(vocab) for _ in range(TOKENS_PER_DOC))
            put(url, (text + "\n").encode(), "text/plain; charset=utf-8")
            rows.append([url, f"cluster {cluster} document {i}"])
    write_table("two-cluster", ["reference", "title"], rows)

    rows = []
    for slug, (title, date) in SUPPLY_CHAIN_TITLES.items():
        url = f"{BASE}/supply-chain/{slug}"
        put(url, (HERE / "pages" / "supply-chain" / f"{slug}.html").read_bytes(), "text/html; charset=utf-8")
        rows.append([url, title, date, "curated, supply chain"])
    # A dead link: listed in the table, absent from the cache.
    rows.append([f"{BASE}/supply-chain/retired-page", "Page that no longer exists", "2019-05-01", ""])
    write_table("supply-chain", ["reference", "title", "date", "notes"], rows)

    rows = []
    for page in sorted((HERE / "pages" / "gardening").glob("*.html")):
        url = f"{BASE}/gardening/{page.stem}"
        put(url, page.read_bytes(), "text/html")
        rows.append([url, page.stem])
    write_table("gardening", ["reference", "title"], rows)


if __name__ == "__main__":
    main()
