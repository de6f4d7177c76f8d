from packcool.main import app

app()
