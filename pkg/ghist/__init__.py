# ghist: possibly-gapped histograms, DESS uniformity, and two-phase analysis of histogram (ANOHT).
