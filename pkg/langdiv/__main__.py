from langdiv.main import main

raise SystemExit(main())
