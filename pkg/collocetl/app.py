"""
The ``collocetl`` command line.

Subcommands: ``list``, ``fetch``, ``collocate``, ``pipeline run``,
``pipeline graph`` and ``synth``. Every subcommand reads the JSON config
given with ``--config``; flags override its scalars.

Exit codes: 0 ok, 1 config, 2 io/transport, 3 no temporal match,
4 empty product, 5 constraint violation, 6 cyclic graph.
"""

import asyncio
import sys
from pathlib import Path
from urllib.parse import urlparse

from traitlets import Dict, Instance, Integer, TraitError, Unicode
from traitlets.config import Application

from ._version import __version__
from .colloc import CollocConfig, collocate_detailed, granule_to_track
from .config import EtlConfig, load_config
from .errors import CollocError, ConfigError, IoError
from .geodesy import DEFAULT_CONSTS
from .executor import PipelineExecutor, stats_of
from .granule import format_instant, parse_instant, time_range, write_granule
from .loader import Loader
from .pipeline_graph import collocation_graph, graph_from_json, graph_to_json
from .sources import Extractor
from .synthgen import SceneSpec, TrackSpec, gen_image, gen_track_granule, write_fixture

TSV_COLUMNS = ("source_id", "product", "band", "t_start", "t_end", "format", "uri")

common_aliases = {
    "config": "CommandApp.config_file",
    "band": "CollocConfig.band",
    "d-max-km": "CollocConfig.d_max_km",
    "dt-max-s": "CollocConfig.dt_max_s",
    "format": "Loader.format",
    "output-dir": "Loader.store_dir",
    "jobs": "PipelineExecutor.jobs",
    "log-level": "Application.log_level",
}


class CommandApp(Application):
    """Base of the subcommands: loads the config file, builds the services"""

    version = __version__
    aliases = common_aliases
    classes = [CollocConfig, Extractor, Loader, PipelineExecutor]

    config_file = Unicode(
        "",
        config=True,
        help="""
        JSON config file, validated before anything else runs.
        """,
    )

    etl = Instance(EtlConfig, allow_none=True)

    def initialize(self, argv=None):
        super().initialize(argv)
        if not self.config_file:
            raise ConfigError("No config file given, use --config PATH")
        self.etl = load_config(self.config_file)
        merged = self.etl.to_traitlets_config()
        merged.merge(self.config)
        self.config = merged

    def args(self, names, optional=()):
        """Positional arguments by name, optional ones None when absent"""
        given = list(self.extra_args)
        if not len(names) <= len(given) <= len(names) + len(optional):
            usage = " ".join([*names, *(f"[{o}]" for o in optional)])
            raise ConfigError(f"Usage: collocetl {self.name} {usage}")
        given += [None] * (len(names) + len(optional) - len(given))
        return given

    def source(self, role):
        """The configured image or track source"""
        source_id = getattr(self.etl, f"{role}_source")
        if source_id is not None:
            return self.etl.source(source_id)
        grammar = "abi" if role == "image" else "cpr"
        for src in self.etl.sources:
            if src.name_grammar == grammar:
                return src
        raise ConfigError(f"No {role} source configured")

    def make_extractor(self):
        return Extractor(parent=self)

    def run(self):
        raise NotImplementedError()

    def start(self):
        return asyncio.run(self.run()) or 0


class ListApp(CommandApp):
    name = "list"
    description = "List granules of a source intersecting a time window, as TSV."
    aliases = {**common_aliases, "product": "ListApp.product", "band": "ListApp.band"}

    product = Unicode("", config=True, help="Product to list, default: the source product.")
    band = Integer(None, allow_none=True, config=True, help="Only list this band.")

    async def run(self):
        source_id, t0, t1 = self.args(["SOURCE_ID", "T0", "T1"])
        src = self.etl.source(source_id)
        try:
            window = (parse_instant(t0), parse_instant(t1))
        except ValueError as e:
            raise ConfigError(f"Invalid window: {e}") from e
        metas = await self.make_extractor().list_granules(
            src, window, product=self.product or None, band=self.band
        )
        print("\t".join(TSV_COLUMNS))
        for m in metas:
            band = "" if m.band is None else str(m.band)
            print(
                "\t".join(
                    [m.source_id, m.product, band, format_instant(m.t_start),
                     format_instant(m.t_end), m.format.value, m.uri]
                )
            )
        return 0


class FetchApp(CommandApp):
    name = "fetch"
    description = "Fetch one granule and write its common form as .sgr."
    aliases = {**common_aliases, "out": "FetchApp.out"}

    out = Unicode("", config=True, help="Output file, default: <output dir>/<name>.sgr")

    async def run(self):
        source_id, uri = self.args(["SOURCE_ID", "URI"])
        src = self.etl.source(source_id)
        granule = await self.make_extractor().fetch(src, src.parse(uri))
        out = Path(self.out or Path(self.etl.output_dir) / (Path(uri).stem + ".sgr"))
        try:
            out.parent.mkdir(parents=True, exist_ok=True)
            out.write_bytes(write_granule(granule))
        except OSError as e:
            raise IoError(f"Could not write {out}: {e}") from e
        print(out)
        return 0


class CollocateApp(CommandApp):
    name = "collocate"
    description = """
    Collocate a track granule with an image granule and load the product.
    Without IMAGE_URI the image closest in time to the track is selected.
    """

    async def run(self):
        track_uri, image_uri = self.args(["TRACK_URI"], optional=["IMAGE_URI"])
        colloc = CollocConfig(parent=self)
        extractor = self.make_extractor()
        track_src, image_src = self.source("track"), self.source("image")

        track_meta = track_src.parse(track_uri)
        track_granule = await extractor.fetch(track_src, track_meta)
        if image_uri:
            image_meta = image_src.parse(image_uri)
        else:
            image_meta = await extractor.find_covering(
                image_src, time_range(track_granule), band=colloc.band, dt_max_s=colloc.dt_max_s
            )
            self.log.info(f"Selected image {image_meta.uri}")
        image = await extractor.fetch(image_src, image_meta)
        if self.etl.consts is not None and self.etl.consts != image.geoloc.consts:
            self.log.warning(
                f"Image {image_meta.uri} carries ellipsoid constants "
                f"{image.geoloc.consts.to_dict()}, they replace the configured "
                f"{self.etl.consts.to_dict()}"
            )

        records, stats = collocate_detailed(granule_to_track(track_granule), image, colloc)
        print(stats.summary(), file=sys.stderr)
        product, appended = Loader(parent=self).load(
            records, image_meta, track_meta, colloc.to_dict()
        )
        print(product.path)
        return 0


class PipelineRunApp(CommandApp):
    name = "run"
    description = "Run a pipeline graph file stage by stage."
    aliases = {**common_aliases, "input": "PipelineRunApp.inputs"}

    inputs = Dict(
        config=True,
        help="Granule names by source Concept id, e.g. --input imgB=<name>",
    )

    async def run(self):
        (graph_file,) = self.args(["GRAPH_FILE"])
        try:
            text = Path(graph_file).read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError(f"Cannot read graph {graph_file}: {e}") from e
        graph = graph_from_json(text)
        executor = PipelineExecutor(parent=self, inputs=self.inputs)
        try:
            report = await executor.run(graph)
        finally:
            # statuses of the nodes that ran are printed even when one failed
            if executor.last_report is not None:
                for line in executor.last_report.status_lines():
                    print(line, file=sys.stderr)
        stats = stats_of(report)
        if stats is not None:
            print(stats.summary(), file=sys.stderr)
        return 0


class PipelineGraphApp(CommandApp):
    name = "graph"
    description = "Print the standard collocation graph as JSON."
    aliases = {
        **common_aliases,
        "image-uri": "PipelineGraphApp.image_uri",
        "track-uri": "PipelineGraphApp.track_uri",
    }

    image_uri = Unicode("", config=True, help="Fixed image granule name.")
    track_uri = Unicode("", config=True, help="Fixed track granule name.")

    async def run(self):
        self.args([])
        graph = collocation_graph(
            image_source=self.source("image").id,
            track_source=self.source("track").id,
            image_uri=self.image_uri or None,
            track_uri=self.track_uri or None,
        )
        sys.stdout.write(graph_to_json(graph))
        return 0


def _factory(cls):
    # fresh instances, not the per-class singletons
    return lambda parent: cls(parent=parent)


class PipelineApp(Application):
    name = "pipeline"
    description = "Pipeline graph commands."
    subcommands = {
        "run": (_factory(PipelineRunApp), PipelineRunApp.description),
        "graph": (_factory(PipelineGraphApp), PipelineGraphApp.description),
    }

    def start(self):
        if self.subapp is None:
            raise ConfigError("Usage: collocetl pipeline {run,graph} ...")
        return self.subapp.start()


class SynthApp(CommandApp):
    name = "synth"
    description = """
    Write the synthetic track and scene of the config as .sgr fixtures, into
    the roots of the local track and image sources or the output directory.
    """

    def _root(self, role):
        try:
            src = self.source(role)
        except ConfigError:
            return self.etl.output_dir
        return src.root if urlparse(src.root).scheme in ("", "file") else self.etl.output_dir

    async def run(self):
        self.args([])
        synth = self.etl.synth
        if not synth:
            raise ConfigError("The config has no synth section")
        try:
            if "track" in synth:
                spec = TrackSpec.from_dict(synth["track"])
                source_id = self._source_id("track", "synth-b")
                granule = gen_track_granule(spec, source_id=source_id)
                print(write_fixture(granule, self._root("track")))
            if "scene" in synth:
                spec = SceneSpec.from_dict(synth["scene"])
                source_id = self._source_id("image", "synth-a")
                granule = gen_image(spec, self.etl.consts or DEFAULT_CONSTS, source_id=source_id)
                print(write_fixture(granule, self._root("image")))
        except ValueError as e:
            raise ConfigError(f"Invalid synth section: {e}") from e
        return 0

    def _source_id(self, role, fallback):
        try:
            return self.source(role).id
        except ConfigError:
            return fallback


class CollocApp(Application):
    name = "collocetl"
    version = __version__
    description = """
    Collocate geostationary imager pixels with polar-orbiting radar profiles.
    """
    examples = """
    collocetl list --config etl.json A 2019-04-10T12:00Z 2019-04-10T13:00Z
    collocetl collocate --config etl.json <track name>
    collocetl pipeline run --config etl.json graph.json
    """
    subcommands = {
        "list": (_factory(ListApp), ListApp.description),
        "fetch": (_factory(FetchApp), FetchApp.description),
        "collocate": (_factory(CollocateApp), CollocateApp.description.strip()),
        "pipeline": (_factory(PipelineApp), PipelineApp.description),
        "synth": (_factory(SynthApp), SynthApp.description.strip()),
    }

    def start(self):
        if self.subapp is None:
            self.print_help()
            return 1
        return self.subapp.start()


def main(argv=None):
    """Run the command line, returns the exit code"""
    app = CollocApp()
    try:
        app.initialize(argv)
        return app.start()
    except CollocError as e:
        app.log.error(str(e))
        return e.exit_code
    except (TraitError, ValueError) as e:
        app.log.error(f"Invalid setting: {e}")
        return 1
    except SystemExit as e:
        # --help, --version and command line errors reported by traitlets
        return e.code if isinstance(e.code, int) else 1


if __name__ == "__main__":
    sys.exit(main())
