# mepscore code package
