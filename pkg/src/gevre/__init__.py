"""Block-maxima extreme value analysis with a random location effect.

Typical use::

    from gevre import blocks, model, mcmc, report

    bs = blocks.read_blocks_csv("maxima.csv")
    spec = model.ModelSpec(bs, "random", group_tag="series")
    draws = mcmc.run_chain(spec, mcmc.McmcConfig(seed=1))
    rk = report.return_level_posterior(draws, k=10)
    print(report.format_reports([report.build_report(rk, bs, 10)]))
"""

__version__ = "0.1.0"

from .gev import GevParams, cdf, log_pdf, quantile, return_level, sample  # noqa: E402,F401
