from lowlight_nerf.cli import main

raise SystemExit(main())
