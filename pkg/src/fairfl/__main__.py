from fairfl.cli import main

raise SystemExit(main())
