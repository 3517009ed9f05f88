# mepscore test suite
